"""
切空间诊断
构造 T_M、T^Ω_M、V^Ω(M)，判定横截性四个等价条件，并给出 SVD 截断算子的微分
"""
import numpy as np
import scipy.linalg as sla

from apkit.core.errors import DimensionError, RankError, SingularGapError, ValidationError
from apkit.core.linalg import full_svd, numerical_rank
from apkit.core.logger import get_logger
from apkit.core.models import ObservationMask, RowSplit, TangentMatrix, TransversalityReport

logger = get_logger(__name__)

# T_M 为 n² × 2n² 稠密矩阵
MAX_TANGENT_N = 64
# 诊断用秩阈值：σ > DIAG_RTOL · σ1(T^Ω)
DIAG_RTOL = 1e-6
GAP_RTOL = 1e-8


def manifold_dim(n: int, r: int) -> int:
    return 2 * n * r - r * r


def _square(M: np.ndarray, name: str = "M") -> int:
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {M.shape}")
    return M.shape[0]


def build_tangent_matrix(M: np.ndarray) -> TangentMatrix:
    """T_M：位置 (i, j) 对应的行在第 i 块放 M 的第 j 列，在第 n+j 块放 M 的第 i 行"""
    M = np.asarray(M, dtype=np.float64)
    n = _square(M)
    if n > MAX_TANGENT_N:
        raise ValidationError(
            f"T_M is dense n²x2n²; n={n} exceeds {MAX_TANGENT_N}, use build_v_omega instead")
    T = np.zeros((n, n, 2 * n, n))
    idx = np.arange(n)
    # T[i, j, i, :] = M[:, j]
    T[idx, :, idx, :] = M.T
    # T[i, j, n+j, :] = M[i, :]，相邻的高级索引维度原位保留，形状为 (i, j, k)
    T[:, idx, n + idx, :] = M[:, None, :]
    row_index = tuple((i, j) for i in range(n) for j in range(n))
    return TangentMatrix(n=n, data=T.reshape(n * n, 2 * n * n), row_index=row_index)


def select_rows(T: TangentMatrix, mask: ObservationMask) -> RowSplit:
    """按掩码（字典序）拆分为 T^Ω 与 T^{Ωc}"""
    n = T.n
    if mask.shape != (n, n):
        raise DimensionError(f"mask shape {mask.shape} does not match T_M for n={n}")
    flat = mask.array.reshape(-1)
    omega_pos = np.flatnonzero(flat)
    comp_pos = np.flatnonzero(~flat)
    return RowSplit(
        omega=T.data[omega_pos],
        complement=T.data[comp_pos],
        omega_rows=tuple(T.row_index[p] for p in omega_pos),
        complement_rows=tuple(T.row_index[p] for p in comp_pos),
    )


def build_v_omega(M: np.ndarray, mask: ObservationMask) -> np.ndarray:
    """V^Ω(M) = T^Ω (T^Ω)ᵀ，直接由行列内积组装，不构造 T_M"""
    M = np.asarray(M, dtype=np.float64)
    _square(M)
    mask.check_shape(M)
    I, J = mask.rows_idx, mask.cols_idx
    col_gram = M.T @ M
    row_gram = M @ M.T
    same_row = I[:, None] == I[None, :]
    same_col = J[:, None] == J[None, :]
    return same_row * col_gram[np.ix_(J, J)] + same_col * row_gram[np.ix_(I, I)]


def _rank_above(sigma: np.ndarray, tol: float) -> int:
    return int(np.count_nonzero(sigma > tol))


def tangent_contraction(M: np.ndarray, mask: ObservationMask, r: int | None = None) -> float:
    """‖P_{Ωc} P_{T(M)}‖₂：两切空间最小主角的余弦，< 1 当且仅当交集平凡"""
    M = np.asarray(M, dtype=np.float64)
    n = _square(M)
    mask.check_shape(M)
    if mask.is_full:
        return 0.0
    r = numerical_rank(M) if r is None else r
    factors = full_svd(M)
    U, V = factors.U[:, :r], factors.V[:, :r]
    # 切空间 = {U A + B Vᵀ}，基向量 vec(u_a e_kᵀ) 与 vec(e_k v_bᵀ) 张成后正交化
    eye = np.eye(n)
    spanning = np.hstack([np.kron(U, eye), np.kron(eye, V)])
    Q = sla.orth(spanning)
    comp = np.flatnonzero(~mask.array.reshape(-1))
    return float(np.linalg.norm(Q[comp], 2))


def transversality_report(M: np.ndarray, mask: ObservationMask, r: int,
                          rtol: float = DIAG_RTOL, with_contraction: bool = True
                          ) -> TransversalityReport:
    """分别计算四个等价条件

    (1) Null(T^Ω) ⊆ Null(T^{Ωc})；(2) Rowspace(T^{Ωc}) ⊆ Rowspace(T^Ω)；
    (3) rank T^Ω = 2nr − r²；(4) rank V^Ω = 2nr − r²。
    所有秩使用同一个绝对阈值 rtol·σ1(T^Ω)，默认 rtol = 1e-6，而不是
    numerical_rank 的 max(rows, cols)·1e-10·σ1：V^Ω = T^Ω (T^Ω)ᵀ 的特征值是
    T^Ω 奇异值的平方，只剩一半有效数字，1e-10 量级的阈值会让 (3) 与 (4)
    在边界实例上给出不同的秩。
    """
    M = np.asarray(M, dtype=np.float64)
    n = _square(M)
    mask.check_shape(M)
    actual = numerical_rank(M)
    if actual != r:
        raise RankError(f"declared rank {r} but M has numerical rank {actual}")

    T = build_tangent_matrix(M)
    split = select_rows(T, mask)
    dim = manifold_dim(n, r)

    factors = full_svd(split.omega)
    tol = rtol * float(factors.sigma[0])
    rank_T_omega = _rank_above(factors.sigma, tol)

    # (1)：T^{Ωc} 在 Null(T^Ω) 上的分量
    if split.complement.shape[0]:
        rowspace = factors.V[:, :rank_T_omega]
        residual = split.complement - (split.complement @ rowspace) @ rowspace.T
        intersection_trivial = bool(np.linalg.norm(residual, 2) <= tol)
    else:
        intersection_trivial = True

    # (2)：堆叠后秩不增加
    stacked = np.vstack([split.omega, split.complement])
    rowspace_inclusion = _rank_above(sla.svdvals(stacked), tol) == rank_T_omega

    # (4)：V^Ω 的特征值是 T^Ω 奇异值的平方
    eig = np.clip(np.linalg.eigvalsh(build_v_omega(M, mask)), 0.0, None)
    rank_V_omega = _rank_above(np.sqrt(eig), tol)

    contraction = tangent_contraction(M, mask, r) if with_contraction else None
    report = TransversalityReport(
        n=n, r=r, m=mask.m, dim_manifold=dim,
        rank_T_omega=rank_T_omega, rank_V_omega=rank_V_omega,
        rowspace_inclusion_holds=rowspace_inclusion,
        intersection_trivial=intersection_trivial,
        certified_linear=rank_T_omega == dim,
        contraction=contraction,
    )
    if not report.conditions_agree:
        logger.warning(f"Transversality conditions disagree (near-degenerate instance): "
                       f"{report.conditions}")
    logger.debug(f"Transversality n={n} r={r} m={mask.m}: rank T^Ω={rank_T_omega}/{dim}, "
                 f"certified={report.certified_linear}")
    return report


def tangent_projection(M: np.ndarray, Y: np.ndarray, r: int) -> np.ndarray:
    """Y 在 T_{M_r}(M) 上的正交投影 P_U Y + Y P_V − P_U Y P_V"""
    M = np.asarray(M, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if M.shape != Y.shape:
        raise DimensionError(f"Y shape {Y.shape} does not match M shape {M.shape}")
    actual = numerical_rank(M)
    if actual != r:
        raise RankError(f"declared rank {r} but M has numerical rank {actual}")
    factors = full_svd(M)
    return _project_tangent(factors.U[:, :r], factors.V[:, :r], Y)


def _project_tangent(U: np.ndarray, V: np.ndarray, Y: np.ndarray) -> np.ndarray:
    UtY = U.T @ Y
    YV = Y @ V
    return U @ UtY + YV @ V.T - U @ (UtY @ V) @ V.T


def svd_truncation_differential(X: np.ndarray, Y: np.ndarray, r: int) -> np.ndarray:
    """P_{M_r} 在 X 处沿 Y 的方向导数

    P_T(Y) 加上主方向 Φ±_{i,j} = (u_j v_iᵀ ± u_i v_jᵀ)/√2 (i ≤ r < j) 上的曲率修正，
    权重分别为 σ_j/(σ_i − σ_j) 与 −σ_j/(σ_i + σ_j)。
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.shape != Y.shape:
        raise DimensionError(f"Y shape {Y.shape} does not match X shape {X.shape}")
    k = min(X.shape)
    if not 1 <= r <= k:
        raise DimensionError(f"rank r={r} out of range [1, {k}]")
    factors = full_svd(X)
    sigma, U, V = factors.sigma, factors.U, factors.V
    if sigma[0] == 0:
        raise SingularGapError("X = 0 has no singular gap")
    if r < k and sigma[r - 1] - sigma[r] < GAP_RTOL * sigma[0]:
        raise SingularGapError(
            f"σ_r={sigma[r - 1]:.3e} and σ_(r+1)={sigma[r]:.3e} are not separated")

    result = _project_tangent(U[:, :r], V[:, :r], Y)
    if r == k:
        return result

    coeff = U.T @ Y @ V
    lower = coeff[r:, :r]           # u_jᵀ Y v_i
    upper_t = coeff[:r, r:].T       # u_iᵀ Y v_j
    s_i = sigma[:r][None, :]
    s_j = sigma[r:][:, None]
    w_plus = s_j / (s_i - s_j)
    w_minus = s_j / (s_i + s_j)
    g_plus = (lower + upper_t) / np.sqrt(2.0)
    g_minus = (lower - upper_t) / np.sqrt(2.0)

    C = np.zeros_like(coeff)
    C[r:, :r] = (w_plus * g_plus - w_minus * g_minus) / np.sqrt(2.0)
    C[:r, r:] = ((w_plus * g_plus + w_minus * g_minus) / np.sqrt(2.0)).T
    return result + U @ C @ V.T
