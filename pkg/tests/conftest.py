from pathlib import Path

import numpy as np
import pytest

from apkit.core.linalg import project_mask, svd_truncate
from apkit.core.models import ObservationMask

DATA_DIR = Path(__file__).parent / "data"

EXAMPLE1_M = np.array([[1.0, 4.0], [2.0, 8.0]])
EXAMPLE1_OMEGA = [(1, 2), (2, 1)]

EXAMPLE2_M = np.array([[-3.0, -1.0, -4.0], [9.0, 3.0, 12.0], [6.0, 2.0, 8.0]])
EXAMPLE2_OMEGA = [(1, 1), (1, 3), (2, 2), (3, 1)]


def low_rank(rng: np.random.Generator, rows: int, r: int, cols: int | None = None) -> np.ndarray:
    cols = rows if cols is None else cols
    return rng.uniform(size=(rows, r)) @ rng.uniform(size=(r, cols))


def mask_with_m(rng: np.random.Generator, n: int, m: int) -> ObservationMask:
    known = np.zeros(n * n, dtype=bool)
    known[rng.choice(n * n, size=m, replace=False)] = True
    return ObservationMask(known.reshape(n, n))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def example1():
    return EXAMPLE1_M.copy(), ObservationMask.from_pairs((2, 2), EXAMPLE1_OMEGA, one_based=True)


@pytest.fixture
def example2():
    return EXAMPLE2_M.copy(), ObservationMask.from_pairs((3, 3), EXAMPLE2_OMEGA, one_based=True)


@pytest.fixture(scope="session")
def rank2_fixture():
    """15×15 秩 2 矩阵及其掩码（观测文件中的 0 表示缺失）

    打印值只保留 4 位小数，先投影回秩 2 作为真值。
    """
    printed = np.loadtxt(DATA_DIR / "rank2_15x15.csv", delimiter=",")
    observed = np.loadtxt(DATA_DIR / "rank2_15x15_observed.csv", delimiter=",")
    mask = ObservationMask(observed != 0)
    truth, _ = svd_truncate(printed, 2)
    return truth, mask, project_mask(truth, mask)
