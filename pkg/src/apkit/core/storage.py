"""
文件读写
矩阵 CSV 每行一行矩阵，掩码每行一个 1-based 的 "i,j"，向量每行一个实数。
浮点数统一以 17 位有效数字写出，读回无损。
"""
import csv
import json
from pathlib import Path
from typing import Any, Iterable, Sequence, TextIO

import numpy as np

from apkit.core.errors import ValidationError
from apkit.core.logger import get_logger
from apkit.core.models import ObservationMask, as_matrix, as_vector

logger = get_logger(__name__)

FLOAT_FMT = '%.17g'


def _load(path: str | Path, ndmin: int) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"File not found: {path}")
    try:
        return np.loadtxt(path, delimiter=',', ndmin=ndmin, dtype=np.float64)
    except ValueError as e:
        raise ValidationError(f"Cannot parse {path}: {e}") from e


def read_matrix(path: str | Path) -> np.ndarray:
    arr = as_matrix(_load(path, 2), str(path))
    logger.debug(f"Read {arr.shape[0]}x{arr.shape[1]} matrix from {path}")
    return arr


def write_matrix(path: str | Path, X: np.ndarray):
    np.savetxt(path, np.atleast_2d(X), fmt=FLOAT_FMT, delimiter=',')
    logger.debug(f"Wrote {X.shape[0]}x{X.shape[1]} matrix to {path}")


def read_vector(path: str | Path) -> np.ndarray:
    return as_vector(_load(path, 1), str(path))


def write_vector(path: str | Path, x: np.ndarray):
    np.savetxt(path, np.asarray(x).reshape(-1, 1), fmt=FLOAT_FMT)


def read_mask(path: str | Path, shape: tuple[int, int]) -> ObservationMask:
    """读取 1-based "i,j" 列表"""
    arr = _load(path, 2)
    if arr.size == 0:
        raise ValidationError(f"Mask file {path} is empty")
    if arr.shape[1] != 2 or not np.all(arr == np.round(arr)):
        raise ValidationError(f"Mask file {path} must hold integer 'i,j' pairs")
    return ObservationMask.from_pairs(shape, arr.astype(int).tolist(), one_based=True)


def write_mask(path: str | Path, mask: ObservationMask):
    with open(path, 'w', encoding='utf-8', newline='') as f:
        for i, j in mask.pairs(one_based=True):
            f.write(f"{i},{j}\n")


def format_cell(value: Any) -> str:
    if value is None:
        return ''
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_rows(target: str | Path | TextIO, header: Sequence[str], rows: Iterable[Sequence]):
    """带表头的 CSV；target 可以是路径或已打开的文本流（如 stdout）"""
    if isinstance(target, (str, Path)):
        with open(target, 'w', encoding='utf-8', newline='') as f:
            _write_rows(f, header, rows)
        logger.info(f"Wrote CSV {target}")
    else:
        _write_rows(target, header, rows)


def _write_rows(f: TextIO, header: Sequence[str], rows: Iterable[Sequence]):
    writer = csv.writer(f, lineterminator='\n')
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_cell(v) for v in row])


def read_rows(path: str | Path) -> list[dict[str, str]]:
    with open(path, encoding='utf-8', newline='') as f:
        return list(csv.DictReader(f))


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"Object of type {type(obj).__name__} is not JSON serializable")


def dump_json(data: dict, target: str | Path | TextIO | None = None) -> str:
    text = json.dumps(data, ensure_ascii=False, indent=2, default=_json_default)
    if target is None:
        return text
    if isinstance(target, (str, Path)):
        Path(target).write_text(text + '\n', encoding='utf-8')
        logger.info(f"Wrote JSON {target}")
    else:
        target.write(text + '\n')
    return text
