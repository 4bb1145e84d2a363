"""
交替投影矩阵补全
Y_k = P_{M_r}(X_k)，X_{k+1} = P_{A_Ω}(Y_k)，直到 ‖X_{k+1} − X_k‖_F < tol
"""
import math
import time
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from apkit.core.errors import DimensionError, InsufficientDataError, ValidationError
from apkit.core.linalg import full_svd, project_affine_mask, project_mask, svd_truncate
from apkit.core.logger import get_logger
from apkit.core.models import (
    CompletionConfig,
    CompletionResult,
    CompletionTrace,
    InitMethod,
    MetricsRecord,
    ObservationMask,
    TraceRecord,
    as_matrix,
)
from apkit.services.existence import max_identifiable_rank

logger = get_logger(__name__)

PROGRESS_EVERY = 500
RATE_FLOOR = 1e-13
RATE_MIN_POINTS = 10


def rank_one_pursuit_init(observed: np.ndarray, mask: ObservationMask, r: int) -> np.ndarray:
    """秩一匹配追踪（OR1MP）初值

    每步取残差 P_Ω(observed − X) 的首个奇异对 u vᵀ 加入基，
    再在 Ω 上用最小二乘重新拟合全部基的权重（秩亏时取最小范数解）。
    """
    if r < 1:
        raise ValidationError(f"pursuit steps must be >= 1, got {r}")
    observed = as_matrix(observed, "observed")
    mask.check_shape(observed, "observed")
    I, J = mask.rows_idx, mask.cols_idx
    target = observed[I, J]
    scale = float(np.linalg.norm(target))

    X = np.zeros_like(observed)
    bases: list[np.ndarray] = []
    for k in range(r):
        residual = project_mask(observed - X, mask)
        res_norm = float(np.linalg.norm(residual))
        if res_norm <= 1e-14 * max(scale, 1.0):
            logger.debug(f"OR1MP residual vanished after {k} steps")
            break
        factors = full_svd(residual)
        bases.append(np.outer(factors.U[:, 0], factors.V[:, 0]))
        design = np.column_stack([B[I, J] for B in bases])
        theta = sla.lstsq(design, target)[0]
        X = np.tensordot(theta, np.array(bases), axes=1)
    return X


def _initial_point(observed: np.ndarray, mask: ObservationMask,
                   config: CompletionConfig) -> np.ndarray:
    if config.init == InitMethod.RANK_ONE_PURSUIT:
        X0 = rank_one_pursuit_init(observed, mask, config.k_steps)
    elif config.init == InitMethod.CUSTOM:
        X0 = as_matrix(config.custom_init, "custom_init")
        mask.check_shape(X0, "custom_init")
    else:
        X0 = project_mask(observed, mask)
    # 迭代从 A_Ω 内的点开始
    return project_affine_mask(X0, mask, observed)


def ap_complete(observed: np.ndarray, mask: ObservationMask, config: CompletionConfig,
                truth: np.ndarray | None = None) -> CompletionResult:
    """交替投影补全

    truth 只用于记录误差轨迹，迭代本身不读取它。
    不收敛时返回最后的迭代点并置 converged=False。
    """
    observed = as_matrix(observed, "observed")
    mask.check_shape(observed, "observed")
    r = config.guess_rank
    if r > min(observed.shape):
        raise DimensionError(f"guess rank {r} exceeds min{observed.shape}")
    if truth is not None:
        truth = as_matrix(truth, "truth")
        mask.check_shape(truth, "truth")
        truth_norm = float(np.linalg.norm(truth)) or 1.0

    started = time.perf_counter()
    off = ~mask.array
    X = _initial_point(observed, mask, config)
    trace = CompletionTrace() if config.record_trace else None
    converged = False
    k = 0
    while k < config.max_iters:
        Y, factors = svd_truncate(X, r)
        X_next = project_affine_mask(Y, mask, observed)
        diff = X - Y
        step = float(np.linalg.norm(X_next - X))
        if trace is not None:
            truth_mce = truth_fro = None
            if truth is not None:
                err = X_next - truth
                truth_mce = float(np.max(np.abs(err)))
                truth_fro = float(np.linalg.norm(err)) / truth_norm
            trace.append(TraceRecord(
                k=k,
                step_norm=step,
                gap_norm=float(np.linalg.norm(diff)),
                offmask_gap=float(np.linalg.norm(diff[off])),
                omega_gap=float(np.linalg.norm(X_next - Y)),
                svd_tie=factors.has_tie(r),
                truth_mce=truth_mce,
                truth_fro=truth_fro,
            ))
        X = X_next
        k += 1
        if step < config.tol:
            converged = True
            break
        if k % PROGRESS_EVERY == 0:
            logger.debug(f"AP iteration {k}: step={step:.3e}")

    Y_star, _ = svd_truncate(X, r)
    elapsed = time.perf_counter() - started

    rate = None
    if trace is not None:
        try:
            rate = estimate_rate(trace, 'truth_fro' if truth is not None else 'step_norm')
        except InsufficientDataError:
            rate = None

    result = CompletionResult(
        X_star=X, Y_star=Y_star, iters=k, converged=converged, guess_rank=r,
        estimated_rate=rate, trace=trace, elapsed=elapsed,
    )
    if converged:
        logger.info(f"AP converged in {k} iterations ({elapsed:.2f}s), "
                    f"‖X*−Y*‖={result.gap:.3e}")
    else:
        logger.info(f"AP stopped after {k} iterations without reaching tol={config.tol:g}, "
                    f"‖X*−Y*‖={result.gap:.3e}")
    if trace is not None and trace.any_tie:
        logger.warning("σ_r = σ_(r+1) encountered; truncation was not unique at some iterations")
    return result


def estimate_rate(errors: Sequence[float] | CompletionTrace, kind: str = 'truth_fro') -> float:
    """拟合 ‖X_k − M‖ ≈ C·c^k 中的 c

    只用大于 1e-13 的点，取其最后三分之一做 log(error) 对 k 的最小二乘。
    """
    if isinstance(errors, CompletionTrace):
        errors = errors.errors(kind)
    values = np.asarray(errors, dtype=np.float64).reshape(-1)
    ks = np.flatnonzero(values > RATE_FLOOR)
    if ks.size < RATE_MIN_POINTS:
        raise InsufficientDataError(
            f"need at least {RATE_MIN_POINTS} errors above {RATE_FLOOR:g}, got {ks.size}")
    tail = ks[-max(3, math.ceil(ks.size / 3)):]
    slope = np.polyfit(tail.astype(np.float64), np.log(values[tail]), 1)[0]
    return float(np.exp(slope))


def completion_metrics(X: np.ndarray, truth: np.ndarray, mask: ObservationMask, r: int,
                       Y: np.ndarray | None = None) -> MetricsRecord:
    """M.C.E、A.R.E（在 Y 上计算，缺省用 X）、O.R. 与缺失率"""
    X = np.asarray(X, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if X.shape != truth.shape:
        raise DimensionError(f"X shape {X.shape} does not match truth shape {truth.shape}")
    mask.check_shape(X)
    Y = X if Y is None else np.asarray(Y, dtype=np.float64)
    mask.check_shape(Y, "Y")

    rows, cols = X.shape
    size = rows * cols
    known = mask.array
    truth_omega = float(np.linalg.norm(truth[known]))
    are_num = float(np.linalg.norm(Y[known] - truth[known]))
    truth_norm = float(np.linalg.norm(truth))
    fro_num = float(np.linalg.norm(X - truth))
    dim = (rows + cols) * r - r * r
    return MetricsRecord(
        mce=float(np.max(np.abs(X - truth))),
        are=are_num / truth_omega if truth_omega else (0.0 if are_num == 0 else math.inf),
        or_ratio=mask.m / dim,
        missing_rate=(size - mask.m) / size,
        known_rate=mask.m / size,
        rel_fro=fro_num / truth_norm if truth_norm else (0.0 if fro_num == 0 else math.inf),
    )


def fixed_point_residuals(X_star: np.ndarray, Y_star: np.ndarray) -> tuple[float, float]:
    """(‖Y*(X*−Y*)ᵀ‖_F, ‖(Y*)ᵀ(X*−Y*)‖_F)，在极限点处均为零"""
    X_star = np.asarray(X_star, dtype=np.float64)
    Y_star = np.asarray(Y_star, dtype=np.float64)
    if X_star.shape != Y_star.shape:
        raise DimensionError(f"X* shape {X_star.shape} does not match Y* shape {Y_star.shape}")
    D = X_star - Y_star
    return float(np.linalg.norm(Y_star @ D.T)), float(np.linalg.norm(Y_star.T @ D))


def complete_with_rank_escalation(observed: np.ndarray, mask: ObservationMask,
                                  config: CompletionConfig, gap_tol: float = 1e-4,
                                  max_rank: int | None = None,
                                  truth: np.ndarray | None = None) -> CompletionResult:
    """‖X* − Y*‖_F 高于 gap_tol 时逐次把猜测秩加一

    上限为可辨识的最大秩（(rows+cols)·r − r² < m）。
    """
    rows, cols = np.shape(observed)
    limit = max_identifiable_rank(rows, mask.m, cols)
    if max_rank is not None:
        limit = min(limit, max_rank)
    limit = max(limit, config.guess_rank)

    r = config.guess_rank
    while True:
        run_config = CompletionConfig(
            guess_rank=r, tol=config.tol, max_iters=config.max_iters, init=config.init,
            pursuit_steps=config.pursuit_steps, custom_init=config.custom_init,
            record_trace=config.record_trace,
        )
        result = ap_complete(observed, mask, run_config, truth=truth)
        if result.gap <= gap_tol or r >= limit:
            if result.gap > gap_tol:
                logger.warning(f"Rank escalation reached limit r={r} with ‖X*−Y*‖={result.gap:.3e}")
            return result
        logger.info(f"‖X*−Y*‖={result.gap:.3e} > {gap_tol:g} at r={r}, increasing guess rank")
        r += 1
