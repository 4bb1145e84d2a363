"""
数据模型定义
矩阵一律用 numpy float64 二维数组表示，掩码内部 0-based，文件中 1-based
"""
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, NamedTuple

import numpy as np

from apkit.core.errors import DimensionError, ValidationError


class InitMethod(str, Enum):
    """矩阵补全的初值"""
    MASK_FILL = "maskfill"
    RANK_ONE_PURSUIT = "or1mp"
    CUSTOM = "custom"


class SparseInit(str, Enum):
    """稀疏恢复的初值"""
    MIN_NORM = "minnorm"
    RANDOM_FEASIBLE = "random"
    CUSTOM = "custom"


class Ensemble(str, Enum):
    """随机感知矩阵分布"""
    GAUSSIAN = "gaussian"
    UNIFORM = "uniform"


class Criterion(str, Enum):
    """恢复成功判据：最大分量误差，或相对 Frobenius（向量即 ℓ2）误差"""
    MAX_NORM = "maxnorm"
    REL_FRO = "relfro"


class ExperimentKind(str, Enum):
    TABLE_RUN = "table"
    MAX_RANK_SEARCH = "maxrank"
    SPARSE_FREQ = "sparse"
    IMAGE_RECOVERY = "image"


class NullCheck(str, Enum):
    """零空间交集检查的结论"""
    HOLDS = "holds"
    FAILS = "fails"
    PROBABLY_HOLDS = "probably_holds"


def as_matrix(values: Any, name: str = "matrix") -> np.ndarray:
    """转换为有限值 float64 二维数组，拒绝 NaN/Inf 与空矩阵"""
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionError(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains NaN or Inf")
    return arr


def as_vector(values: Any, name: str = "vector") -> np.ndarray:
    arr = np.array(values, dtype=np.float64).reshape(-1)
    if arr.size < 1:
        raise DimensionError(f"{name} must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains NaN or Inf")
    return arr


class ObservationMask:
    """已知元素位置集合 Ω

    内部保存布尔矩阵，按 (i, j) 字典序迭代。构造后只读。
    """

    def __init__(self, known: np.ndarray):
        arr = np.array(known, dtype=bool)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DimensionError(f"mask must be a non-empty 2-D array, got shape {arr.shape}")
        if not arr.any():
            raise ValidationError("mask must contain at least one known entry")
        arr.setflags(write=False)
        self._known = arr
        rows, cols = np.nonzero(arr)
        rows.setflags(write=False)
        cols.setflags(write=False)
        self._rows = rows
        self._cols = cols

    @classmethod
    def from_pairs(cls, shape: tuple[int, int], pairs,
                   one_based: bool = False) -> "ObservationMask":
        rows, cols = shape
        known = np.zeros((rows, cols), dtype=bool)
        offset = 1 if one_based else 0
        seen = set()
        for i, j in pairs:
            i, j = int(i) - offset, int(j) - offset
            if not (0 <= i < rows and 0 <= j < cols):
                raise DimensionError(
                    f"mask entry ({i + offset}, {j + offset}) outside {rows}x{cols}")
            if (i, j) in seen:
                raise ValidationError(f"duplicate mask entry ({i + offset}, {j + offset})")
            seen.add((i, j))
            known[i, j] = True
        return cls(known)

    @classmethod
    def full(cls, rows: int, cols: int) -> "ObservationMask":
        return cls(np.ones((rows, cols), dtype=bool))

    @property
    def array(self) -> np.ndarray:
        return self._known

    @property
    def shape(self) -> tuple[int, int]:
        return self._known.shape

    @property
    def m(self) -> int:
        return int(self._rows.size)

    @property
    def rows_idx(self) -> np.ndarray:
        return self._rows

    @property
    def cols_idx(self) -> np.ndarray:
        return self._cols

    @property
    def is_full(self) -> bool:
        return self.m == self._known.size

    def pairs(self, one_based: bool = False) -> list[tuple[int, int]]:
        offset = 1 if one_based else 0
        return [(int(i) + offset, int(j) + offset) for i, j in zip(self._rows, self._cols)]

    def check_shape(self, X: np.ndarray, name: str = "matrix"):
        if X.shape != self._known.shape:
            raise DimensionError(
                f"{name} shape {X.shape} does not match mask shape {self._known.shape}")

    def __len__(self) -> int:
        return self.m

    def __eq__(self, other) -> bool:
        return isinstance(other, ObservationMask) and np.array_equal(self._known, other._known)

    def __hash__(self):
        return hash((self._known.shape, self._known.tobytes()))

    def __repr__(self) -> str:
        return f"ObservationMask({self.shape[0]}x{self.shape[1]}, m={self.m})"


@dataclass(frozen=True)
class SVDFactors:
    """完整 SVD 因子：U (rows×k)、sigma 非增、V (cols×k)"""
    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray

    def has_tie(self, r: int, rtol: float = 1e-12) -> bool:
        """σ_r == σ_{r+1} > 0 时截断投影不唯一"""
        if r >= self.sigma.size:
            return False
        s_r, s_next = self.sigma[r - 1], self.sigma[r]
        scale = max(float(self.sigma[0]), 1.0)
        return bool(s_next > rtol * scale and s_r - s_next <= rtol * scale)


@dataclass(frozen=True)
class TangentMatrix:
    """T_M (n² × 2n²)，row_index[k] 是第 k 行对应的矩阵位置 (i, j)"""
    n: int
    data: np.ndarray
    row_index: tuple[tuple[int, int], ...]


class RowSplit(NamedTuple):
    omega: np.ndarray
    complement: np.ndarray
    omega_rows: tuple[tuple[int, int], ...]
    complement_rows: tuple[tuple[int, int], ...]


@dataclass
class TransversalityReport:
    n: int
    r: int
    m: int
    dim_manifold: int
    rank_T_omega: int
    rank_V_omega: int
    rowspace_inclusion_holds: bool
    intersection_trivial: bool
    certified_linear: bool
    contraction: float | None = None

    @property
    def conditions(self) -> dict[str, bool]:
        """四个等价条件各自的判定结果"""
        return {
            'null_space_inclusion': self.intersection_trivial,
            'rowspace_inclusion': self.rowspace_inclusion_holds,
            'rank_T_omega_full': self.rank_T_omega == self.dim_manifold,
            'rank_V_omega_full': self.rank_V_omega == self.dim_manifold,
        }

    @property
    def conditions_agree(self) -> bool:
        return len(set(self.conditions.values())) == 1

    def to_dict(self) -> dict[str, Any]:
        return {
            'n': self.n,
            'r': self.r,
            'm': self.m,
            'dim_manifold': self.dim_manifold,
            'rank_T_omega': self.rank_T_omega,
            'rank_V_omega': self.rank_V_omega,
            'rowspace_inclusion_holds': self.rowspace_inclusion_holds,
            'intersection_trivial': self.intersection_trivial,
            'certified_linear': self.certified_linear,
            'contraction': self.contraction,
            'conditions': self.conditions,
        }


@dataclass
class CompletionConfig:
    guess_rank: int
    tol: float = 1e-6
    max_iters: int = 5000
    init: InitMethod = InitMethod.MASK_FILL
    pursuit_steps: int | None = None
    custom_init: np.ndarray | None = None
    record_trace: bool = True

    def __post_init__(self):
        self.init = InitMethod(self.init)
        if self.guess_rank < 1:
            raise ValidationError(f"guess_rank must be >= 1, got {self.guess_rank}")
        if not self.tol > 0:
            raise ValidationError(f"tol must be > 0, got {self.tol}")
        if self.max_iters < 1:
            raise ValidationError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.init == InitMethod.CUSTOM and self.custom_init is None:
            raise ValidationError("custom init requires custom_init matrix")
        if self.pursuit_steps is not None and self.pursuit_steps < 1:
            raise ValidationError(f"pursuit_steps must be >= 1, got {self.pursuit_steps}")

    @property
    def k_steps(self) -> int:
        return self.pursuit_steps or self.guess_rank


@dataclass(frozen=True)
class TraceRecord:
    k: int
    step_norm: float
    gap_norm: float
    offmask_gap: float
    omega_gap: float
    svd_tie: bool = False
    truth_mce: float | None = None
    truth_fro: float | None = None


class CompletionTrace:
    """逐次迭代诊断量

    gap_norm = ‖X_k − Y_k‖，omega_gap = ‖X_{k+1} − Y_k‖，
    step_norm = ‖X_{k+1} − X_k‖，offmask_gap = ‖(X_k − Y_k)_{Ωc}‖
    """

    COLUMNS = ('k', 'step_norm', 'gap_norm', 'offmask_gap', 'truth_mce', 'truth_fro',
               'omega_gap', 'svd_tie')

    def __init__(self):
        self.records: list[TraceRecord] = []

    def append(self, record: TraceRecord):
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def _column(self, name: str) -> np.ndarray:
        return np.array([getattr(rec, name) for rec in self.records], dtype=np.float64)

    @property
    def step_norms(self) -> np.ndarray:
        return self._column('step_norm')

    @property
    def gap_norms(self) -> np.ndarray:
        return self._column('gap_norm')

    @property
    def offmask_gaps(self) -> np.ndarray:
        return self._column('offmask_gap')

    @property
    def omega_gaps(self) -> np.ndarray:
        return self._column('omega_gap')

    @property
    def has_truth(self) -> bool:
        return bool(self.records) and self.records[0].truth_mce is not None

    @property
    def any_tie(self) -> bool:
        return any(rec.svd_tie for rec in self.records)

    def errors(self, kind: str = 'truth_fro') -> np.ndarray:
        """用于 estimate_rate 的误差序列；kind 取 truth_fro/truth_mce/gap_norm/step_norm"""
        if kind.startswith('truth') and not self.has_truth:
            raise ValidationError("trace was recorded without ground truth")
        return self._column(kind)

    def rows(self) -> list[tuple]:
        return [
            (rec.k, rec.step_norm, rec.gap_norm, rec.offmask_gap,
             rec.truth_mce, rec.truth_fro, rec.omega_gap, int(rec.svd_tie))
            for rec in self.records
        ]


@dataclass
class CompletionResult:
    X_star: np.ndarray
    Y_star: np.ndarray
    iters: int
    converged: bool
    guess_rank: int
    estimated_rate: float | None = None
    trace: CompletionTrace | None = None
    elapsed: float = 0.0

    @property
    def gap(self) -> float:
        """‖X* − Y*‖_F；明显非零时说明猜测秩偏小"""
        return float(np.linalg.norm(self.X_star - self.Y_star))


@dataclass(frozen=True)
class MetricsRecord:
    mce: float
    are: float
    or_ratio: float
    missing_rate: float
    known_rate: float
    rel_fro: float


@dataclass
class SparseProblem:
    """Ax = b，x 为 s 稀疏；构造时检查 A 行满秩"""
    A: np.ndarray
    b: np.ndarray
    s: int

    def __post_init__(self):
        self.A = as_matrix(self.A, "A")
        self.b = as_vector(self.b, "b")
        n, N = self.A.shape
        if self.b.size != n:
            raise DimensionError(f"b has length {self.b.size}, expected {n}")
        if n >= N:
            raise DimensionError(f"A must be wide (n < N), got {n}x{N}")
        if not 1 <= self.s < N:
            raise ValidationError(f"sparsity s must satisfy 1 <= s < {N}, got {self.s}")
        from apkit.core.linalg import AffineSolver
        self._solver = AffineSolver(self.A)

    @property
    def solver(self):
        return self._solver

    @property
    def N(self) -> int:
        return self.A.shape[1]


@dataclass
class SparseConfig:
    tol: float = 1e-6
    max_iters: int = 10000
    init: SparseInit = SparseInit.MIN_NORM
    seed: int = 0
    custom_init: np.ndarray | None = None
    also_step_tol: bool = False

    def __post_init__(self):
        self.init = SparseInit(self.init)
        if not self.tol > 0:
            raise ValidationError(f"tol must be > 0, got {self.tol}")
        if self.max_iters < 1:
            raise ValidationError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.init == SparseInit.CUSTOM and self.custom_init is None:
            raise ValidationError("custom init requires custom_init vector")


@dataclass
class SparseResult:
    x: np.ndarray
    iters: int
    converged: bool
    support: tuple[int, ...]
    tie_flag: bool
    distances: list[float] = field(default_factory=list)
    support_stable_since: int = 0


@dataclass(frozen=True)
class FrequencyRow:
    s: int
    successes: int
    trials: int
    ensemble: str = Ensemble.GAUSSIAN.value
    failures: int = 0

    @property
    def frequency(self) -> float:
        return self.successes / self.trials if self.trials else 0.0


@dataclass(frozen=True)
class ExistenceReport:
    n: int
    r: int
    m: int
    manifold_dim: int
    sample_ok: bool
    degree_bound: int
    unknowns: int
    minor_equations: int
    overdetermined: bool

    def to_dict(self) -> dict[str, Any]:
        return {
            'n': self.n,
            'r': self.r,
            'm': self.m,
            'manifold_dim': self.manifold_dim,
            'sample_ok': self.sample_ok,
            # 超过 JSON 安全整数范围，用字符串保存
            'degree_bound': str(self.degree_bound),
            'unknowns': self.unknowns,
            'minor_equations': self.minor_equations,
            'overdetermined': self.overdetermined,
        }


@dataclass
class ExperimentSpec:
    kind: ExperimentKind
    n: int = 100
    ranks: list[int] = field(default_factory=lambda: [2])
    missing_rates: list[float] = field(default_factory=lambda: [0.8])
    trials: int = 20
    seed: int = 7
    init: InitMethod = InitMethod.RANK_ONE_PURSUIT
    tol: float = 1e-6
    max_iters: int = 5000
    success_tol: float = 1e-3
    criterion: Criterion = Criterion.MAX_NORM
    workers: int = 1
    sparse_cols: int = 256
    s_values: list[int] = field(default_factory=list)
    ensembles: list[Ensemble] = field(default_factory=lambda: [Ensemble.GAUSSIAN])

    def __post_init__(self):
        self.kind = ExperimentKind(self.kind)
        self.init = InitMethod(self.init)
        self.criterion = Criterion(self.criterion)
        self.ensembles = [Ensemble(e) for e in self.ensembles]
        if self.trials < 1:
            raise ValidationError(f"trials must be >= 1, got {self.trials}")
        if self.n < 1:
            raise ValidationError(f"n must be >= 1, got {self.n}")
        if self.workers < 1:
            raise ValidationError(f"workers must be >= 1, got {self.workers}")
        for rate in self.missing_rates:
            if not 0 <= rate < 1:
                raise ValidationError(f"missing_rate must be in [0, 1), got {rate}")
        if not self.tol > 0:
            raise ValidationError(f"tol must be > 0, got {self.tol}")


@dataclass(frozen=True)
class TableRow:
    rank: int
    missing_rate: float
    or_ratio: float
    mce: float
    are: float
    time: float
    seed: int
    converged: int
    trials: int
    failures: int

    COLUMNS = ('rank', 'missing_rate', 'or_ratio', 'mce', 'are', 'time', 'seed',
               'converged', 'trials', 'failures')

    def as_tuple(self) -> tuple:
        return tuple(getattr(self, c) for c in self.COLUMNS)


@dataclass(frozen=True)
class MaxRankRow:
    missing_rate: float
    max_rank: int | None
    criterion: str
    success_tol: float
    trials: int

    COLUMNS = ('missing_rate', 'max_rank', 'criterion', 'success_tol', 'trials')

    def as_tuple(self) -> tuple:
        return (self.missing_rate, 'none' if self.max_rank is None else self.max_rank,
                self.criterion, self.success_tol, self.trials)


@dataclass
class ImageJob:
    input_path: Path | None
    missing_rate: float = 0.5
    rank: int = 25
    init: InitMethod = InitMethod.RANK_ONE_PURSUIT
    seed: int = 0
    tol: float = 1e-4
    max_iters: int = 500
    masked_path: Path | None = None
    recovered_path: Path | None = None
    init_path: Path | None = None
    synthetic: tuple[int, int, int] | None = None

    def __post_init__(self):
        self.init = InitMethod(self.init)
        if not 0 <= self.missing_rate < 1:
            raise ValidationError(f"missing_rate must be in [0, 1), got {self.missing_rate}")
        if self.rank < 1:
            raise ValidationError(f"rank must be >= 1, got {self.rank}")
        if self.input_path is None and self.synthetic is None:
            raise ValidationError("image job needs an input PGM or a synthetic spec")


@dataclass
class ImageRecovery:
    original: np.ndarray
    masked: np.ndarray
    recovered: np.ndarray
    rmse: float
    initial: np.ndarray | None = None
    init_rmse: float | None = None
    iters: int = 0
    converged: bool = False
    maxval: int = 255

    def to_dict(self) -> dict[str, Any]:
        return {
            'shape': list(self.original.shape),
            'rmse': self.rmse,
            'init_rmse': self.init_rmse,
            'iters': self.iters,
            'converged': self.converged,
            'maxval': self.maxval,
        }
