"""
ℓ0 稀疏恢复的交替投影
y_k = H_s(x_k)，x_{k+1} = P_A(y_k)，直到 x 的最小 N−s 个分量都小于 tol
"""
import itertools
from math import comb

import numpy as np

from apkit.core.errors import ApkitError, BudgetExceededError, DimensionError, ValidationError
from apkit.core.linalg import check_projection_uniqueness, threshold_support
from apkit.core.logger import get_logger
from apkit.core.models import (
    Criterion,
    Ensemble,
    FrequencyRow,
    NullCheck,
    SparseConfig,
    SparseInit,
    SparseProblem,
    SparseResult,
    as_matrix,
)
from apkit.utils import derive_rng, run_indexed

logger = get_logger(__name__)

__all__ = [
    'ap_sparse',
    'check_null_intersection',
    'check_projection_uniqueness',
    'certify_null_intersection',
    'mutual_coherence',
    'recovery_frequency',
    'sample_null_intersection',
]

BRUTE_FORCE_MAX_N = 24
BRUTE_FORCE_MAX_SUPPORTS = 2_000_000
SUBMATRIX_BATCH = 4096
SUBMATRIX_RTOL = 1e-10
ENSEMBLE_KEYS = {Ensemble.GAUSSIAN: 0, Ensemble.UNIFORM: 1}


def _initial_point(problem: SparseProblem, config: SparseConfig) -> np.ndarray:
    solver = problem.solver
    if config.init == SparseInit.CUSTOM:
        x0 = np.asarray(config.custom_init, dtype=np.float64).reshape(-1)
        if x0.size != problem.N:
            raise DimensionError(f"custom_init has length {x0.size}, expected {problem.N}")
        return solver.project(x0, problem.b)
    x0 = solver.min_norm_solution(problem.b)
    if config.init == SparseInit.RANDOM_FEASIBLE:
        rng = np.random.default_rng(config.seed)
        x0 = x0 + solver.project_null(rng.standard_normal(problem.N))
    return x0


def _tail_below(x: np.ndarray, s: int, tol: float) -> bool:
    """第 s+1 大的幅值小于 tol"""
    mags = np.abs(x)
    return bool(np.partition(mags, -(s + 1))[-(s + 1)] < tol)


def ap_sparse(problem: SparseProblem, config: SparseConfig) -> SparseResult:
    """交替投影求 s 稀疏解；返回的 x 总是最后一次仿射投影，满足 Ax = b"""
    solver, b, s = problem.solver, problem.b, problem.s
    x = _initial_point(problem, config)
    tie_flag = False
    distances: list[float] = []
    support_prev: np.ndarray | None = None
    stable_since = 0
    converged = False

    k = 0
    while k < config.max_iters:
        support, tie = threshold_support(x, s)
        tie_flag |= tie
        y = np.zeros_like(x)
        y[support] = x[support]
        distances.append(float(np.linalg.norm(x - y)))
        x_next = solver.project(y, b)
        step = float(np.linalg.norm(x_next - x))
        x = x_next
        k += 1
        if support_prev is None or not np.array_equal(support, support_prev):
            stable_since = k
            support_prev = support
        if _tail_below(x, s, config.tol) and (not config.also_step_tol or step < config.tol):
            converged = True
            break

    final_support, final_tie = threshold_support(x, s)
    if converged:
        logger.debug(f"Sparse AP converged in {k} iterations, support stable since {stable_since}")
    else:
        logger.debug(f"Sparse AP stopped after {k} iterations without convergence")
    return SparseResult(
        x=x, iters=k, converged=converged,
        support=tuple(int(i) for i in final_support),
        tie_flag=tie_flag or final_tie,
        distances=distances,
        support_stable_since=stable_since,
    )


def mutual_coherence(A: np.ndarray) -> float:
    """max_{i≠j} |⟨a_i, a_j⟩| / (‖a_i‖‖a_j‖)"""
    A = as_matrix(A, "A")
    norms = np.linalg.norm(A, axis=0)
    if A.shape[1] < 2:
        return 0.0
    if np.any(norms == 0):
        return 1.0
    An = A / norms
    G = np.abs(An.T @ An)
    np.fill_diagonal(G, 0.0)
    return float(G.max())


def _trivial_answer(A: np.ndarray, s: int) -> bool | None:
    """不需要枚举就能判定的情形"""
    n, N = A.shape
    if not 1 <= s <= N:
        raise ValidationError(f"sparsity s={s} out of range [1, {N}]")
    if s > n:
        return False
    if np.any(np.linalg.norm(A, axis=0) == 0):
        return False
    mu = mutual_coherence(A)
    # spark(A) ≥ 1 + 1/μ
    if mu == 0 or s < 1 + 1 / mu:
        return True
    return None


def _any_deficient(A: np.ndarray, supports: np.ndarray) -> bool:
    sub = np.transpose(A[:, supports], (1, 0, 2))
    sigma = np.linalg.svd(sub, compute_uv=False)
    return bool(np.any(sigma[:, -1] <= SUBMATRIX_RTOL * sigma[:, 0]))


def check_null_intersection(A: np.ndarray, s: int) -> bool:
    """L_s ∩ Null(A) = {0}，即 A 的任意 s 列线性无关（spark(A) > s）

    逐一枚举 C(N, s) 个列子集，超出预算时抛 BudgetExceededError，
    此时改用 sample_null_intersection。
    """
    A = as_matrix(A, "A")
    quick = _trivial_answer(A, s)
    if quick is not None:
        return quick
    N = A.shape[1]
    total = comb(N, s)
    if N > BRUTE_FORCE_MAX_N or total > BRUTE_FORCE_MAX_SUPPORTS:
        raise BudgetExceededError(
            f"exhaustive check needs C({N}, {s}) = {total} supports (limit N <= "
            f"{BRUTE_FORCE_MAX_N}, {BRUTE_FORCE_MAX_SUPPORTS} supports); "
            f"use sample_null_intersection for a probabilistic answer")
    combos = itertools.combinations(range(N), s)
    while batch := list(itertools.islice(combos, SUBMATRIX_BATCH)):
        if _any_deficient(A, np.array(batch)):
            return False
    return True


def sample_null_intersection(A: np.ndarray, s: int, samples: int = 10_000,
                             seed: int = 0) -> NullCheck:
    """随机抽取列子集检查秩；找到秩亏子集即 FAILS，否则 PROBABLY_HOLDS"""
    A = as_matrix(A, "A")
    quick = _trivial_answer(A, s)
    if quick is not None:
        return NullCheck.HOLDS if quick else NullCheck.FAILS
    rng = np.random.default_rng(seed)
    N = A.shape[1]
    done = 0
    while done < samples:
        size = min(SUBMATRIX_BATCH, samples - done)
        supports = np.argsort(rng.random((size, N)), axis=1)[:, :s]
        if _any_deficient(A, supports):
            return NullCheck.FAILS
        done += size
    return NullCheck.PROBABLY_HOLDS


def certify_null_intersection(A: np.ndarray, s: int, samples: int = 10_000,
                              seed: int = 0) -> NullCheck:
    """预算允许时精确枚举，否则退回抽样"""
    try:
        return NullCheck.HOLDS if check_null_intersection(A, s) else NullCheck.FAILS
    except BudgetExceededError as e:
        logger.info(f"{e}; sampling {samples} supports instead")
        return sample_null_intersection(A, s, samples, seed)


def _sensing_matrix(rng: np.random.Generator, n: int, N: int, ensemble: Ensemble) -> np.ndarray:
    if ensemble == Ensemble.UNIFORM:
        return rng.uniform(0.0, 1.0, size=(n, N))
    return rng.standard_normal((n, N))


def _recovered(x: np.ndarray, x_true: np.ndarray, tol: float, criterion: Criterion) -> bool:
    err = x - x_true
    if criterion == Criterion.REL_FRO:
        return bool(np.linalg.norm(err) < tol * np.linalg.norm(x_true))
    return bool(np.max(np.abs(err)) < tol)


def recovery_frequency(n: int, N: int, s_values, trials: int,
                       ensemble: Ensemble | str = Ensemble.GAUSSIAN, seed: int = 0,
                       tol: float = 1e-3, criterion: Criterion | str = Criterion.MAX_NORM,
                       solve_tol: float = 1e-6, max_iters: int = 10000,
                       workers: int = 1) -> list[FrequencyRow]:
    """每个 s 做 trials 次随机恢复实验，统计成功次数

    第 t 次实验的随机流由 (seed, ensemble, s, t) 派生，结果与并行度无关。
    """
    if trials < 1:
        raise ValidationError(f"trials must be >= 1, got {trials}")
    if not 1 <= n < N:
        raise ValidationError(f"need 1 <= n < N, got n={n}, N={N}")
    ensemble = Ensemble(ensemble)
    criterion = Criterion(criterion)
    config = SparseConfig(tol=solve_tol, max_iters=max_iters)
    rows: list[FrequencyRow] = []

    for s in s_values:
        s = int(s)
        if not 1 <= s < N:
            raise ValidationError(f"sparsity s={s} out of range [1, {N - 1}]")

        def trial(t: int, s: int = s) -> bool | None:
            rng = derive_rng(seed, ENSEMBLE_KEYS[ensemble], s, t)
            A = _sensing_matrix(rng, n, N, ensemble)
            x_true = np.zeros(N)
            x_true[rng.choice(N, size=s, replace=False)] = rng.standard_normal(s)
            try:
                result = ap_sparse(SparseProblem(A, A @ x_true, s), config)
            except ApkitError:
                logger.warning(f"Sparse trial s={s} t={t} failed", exc_info=True)
                return None
            return _recovered(result.x, x_true, tol, criterion)

        outcomes = run_indexed(trial, trials, workers)
        row = FrequencyRow(
            s=s,
            successes=sum(1 for o in outcomes if o),
            trials=trials,
            ensemble=ensemble.value,
            failures=sum(1 for o in outcomes if o is None),
        )
        logger.info(f"{ensemble.value} {n}x{N} s={s}: {row.successes}/{trials} recovered")
        rows.append(row)
    return rows
