"""
稠密矩阵基本运算与四个投影算子
"""
import numpy as np
import scipy.linalg as sla

from apkit.core.errors import ConvergenceError, DimensionError, RankError, ValidationError
from apkit.core.logger import get_logger
from apkit.core.models import ObservationMask, SVDFactors, as_vector

logger = get_logger(__name__)

# σ 低于 RANK_RTOL·σ1 视为零（"rank ≤ r" 断言用）
RANK_RTOL = 1e-9


def full_svd(X: np.ndarray) -> SVDFactors:
    """薄 SVD；gesdd 不收敛时退回 gesvd，仍失败则抛 ConvergenceError"""
    try:
        U, sigma, Vt = sla.svd(X, full_matrices=False, lapack_driver='gesdd', check_finite=False)
    except (np.linalg.LinAlgError, ValueError) as e:
        logger.warning(f"gesdd failed on {X.shape} matrix ({e}), retrying with gesvd")
        try:
            U, sigma, Vt = sla.svd(X, full_matrices=False, lapack_driver='gesvd',
                                   check_finite=False)
        except (np.linalg.LinAlgError, ValueError) as e2:
            raise ConvergenceError(f"SVD did not converge for {X.shape} matrix: {e2}") from e2
    return SVDFactors(U=U, sigma=sigma, V=Vt.T)


def singular_values(X: np.ndarray) -> np.ndarray:
    try:
        return sla.svdvals(X, check_finite=False)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise ConvergenceError(f"SVD did not converge for {X.shape} matrix: {e}") from e


def numerical_rank(X: np.ndarray, rtol: float | None = None) -> int:
    """σ > tol 的个数；默认 tol = max(rows, cols)·1e-10·σ1"""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.size == 0:
        return 0
    sigma = singular_values(X)
    if sigma.size == 0 or sigma[0] == 0:
        return 0
    if rtol is None:
        rtol = max(X.shape) * 1e-10
    return int(np.count_nonzero(sigma > rtol * sigma[0]))


def svd_truncate(X: np.ndarray, r: int) -> tuple[np.ndarray, SVDFactors]:
    """最佳秩 ≤ r 逼近（Frobenius 范数），同时返回完整因子

    σ_r = σ_{r+1} 时投影多值，保留分解给出的前 r 个三元组。
    """
    rows, cols = X.shape
    if not 1 <= r <= min(rows, cols):
        raise DimensionError(f"rank r={r} out of range [1, {min(rows, cols)}] for {rows}x{cols}")
    factors = full_svd(X)
    Y = (factors.U[:, :r] * factors.sigma[:r]) @ factors.V[:, :r].T
    return Y, factors


def project_mask(X: np.ndarray, mask: ObservationMask) -> np.ndarray:
    """P_Ω：保留已知位置，其余置零"""
    mask.check_shape(X)
    return np.where(mask.array, X, 0.0)


def project_affine_mask(Y: np.ndarray, mask: ObservationMask, observed: np.ndarray) -> np.ndarray:
    """A_Ω 上的最近点：Ω 上取观测值，Ωc 上保持 Y"""
    mask.check_shape(Y)
    mask.check_shape(observed, "observed")
    return np.where(mask.array, observed, Y)


def threshold_support(x: np.ndarray, s: int, rtol: float = 1e-12) -> tuple[np.ndarray, bool]:
    """前 s 大幅值分量的下标（幅值相同时下标小者优先）以及是否出现并列"""
    N = x.size
    if not 1 <= s <= N:
        raise ValidationError(f"sparsity s={s} out of range [1, {N}]")
    mags = np.abs(x)
    order = np.argsort(-mags, kind='stable')
    if s == N:
        return np.sort(order), False
    kept, dropped = mags[order[s - 1]], mags[order[s]]
    slack = rtol * float(mags[order[0]])
    if not (dropped > 0 and kept - dropped <= slack):
        return np.sort(order[:s]), False
    # 与阈值幅值只差舍入误差的分量视为并列，按下标从小到大补齐
    sure = np.flatnonzero(mags > kept + slack)
    tied = np.flatnonzero(np.abs(mags - kept) <= slack)
    support = np.sort(np.concatenate([sure, tied[:s - sure.size]]))
    return support, True


def hard_threshold(x: np.ndarray, s: int) -> np.ndarray:
    """H_s：保留 s 个最大幅值分量，其余置零"""
    x = np.asarray(x, dtype=np.float64)
    support, _ = threshold_support(x, s)
    out = np.zeros_like(x)
    out[support] = x[support]
    return out


class AffineSolver:
    """{x : Ax = b} 上的正交投影

    对 Aᵀ 做一次经济型 QR（Aᵀ = QR），之后
    P(y) = y + Q·R⁻ᵀ(b − Ay) = y + Aᵀ(AAᵀ)⁻¹(b − Ay)。
    """

    def __init__(self, A: np.ndarray, rtol: float = 1e-10):
        A = np.asarray(A, dtype=np.float64)
        if A.ndim != 2:
            raise DimensionError(f"A must be 2-D, got shape {A.shape}")
        n, N = A.shape
        if n > N:
            raise RankError(f"A ({n}x{N}) cannot have full row rank")
        self.A = A
        self.Q, self.R = sla.qr(A.T, mode='economic')
        diag = np.abs(np.diag(self.R))
        if diag.size == 0 or diag.min() <= rtol * max(diag.max(), 1e-300):
            raise RankError(f"A ({n}x{N}) is not of full row rank")

    @property
    def shape(self) -> tuple[int, int]:
        return self.A.shape

    def project(self, y: np.ndarray, b: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        n, N = self.A.shape
        if y.shape != (N,) or b.shape != (n,):
            raise DimensionError(f"expected y of length {N} and b of length {n}")
        z = sla.solve_triangular(self.R, b - self.A @ y, trans='T')
        return y + self.Q @ z

    def min_norm_solution(self, b: np.ndarray) -> np.ndarray:
        """Aᵀ(AAᵀ)⁻¹b"""
        return self.project(np.zeros(self.A.shape[1]), b)

    def project_null(self, v: np.ndarray) -> np.ndarray:
        """v 在 Null(A) 上的正交投影"""
        return v - self.Q @ (self.Q.T @ v)

    def null_space(self) -> np.ndarray:
        """Null(A) 的标准正交基（列）"""
        return sla.null_space(self.A)


def project_affine_linear(y: np.ndarray, A: np.ndarray, b: np.ndarray,
                          solver: AffineSolver | None = None) -> np.ndarray:
    b = as_vector(b, "b")
    if solver is None:
        solver = AffineSolver(A)
    elif solver.shape != np.shape(A):
        raise DimensionError(f"solver built for {solver.shape}, got A of shape {np.shape(A)}")
    return solver.project(y, b)


def check_projection_uniqueness(x: np.ndarray, s: int) -> bool:
    """第 s 与第 s+1 大的幅值严格不等时 H_s(x) 唯一"""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if not 1 <= s < x.size:
        raise ValidationError(f"sparsity s={s} out of range [1, {x.size - 1}]")
    mags = np.sort(np.abs(x))[::-1]
    return bool(mags[s - 1] != mags[s])
