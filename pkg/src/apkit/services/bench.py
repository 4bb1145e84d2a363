"""
实验运行器
随机问题生成、表格实验、最大可恢复秩搜索、稀疏恢复频率曲线
"""
import math

import numpy as np

from apkit.core.errors import ApkitError, ValidationError
from apkit.core.linalg import project_mask
from apkit.core.logger import get_logger
from apkit.core.models import (
    CompletionConfig,
    Criterion,
    ExperimentSpec,
    FrequencyRow,
    MaxRankRow,
    MetricsRecord,
    ObservationMask,
    TableRow,
)
from apkit.services.completion import ap_complete, completion_metrics
from apkit.services.existence import max_identifiable_rank
from apkit.services.sparse import recovery_frequency
from apkit.utils import derive_seed, fmt_seconds, run_indexed

logger = get_logger(__name__)

FREQUENCY_COLUMNS = ('s', 'successes', 'trials', 'frequency', 'ensemble', 'failures')


def known_count(size: int, missing_rate: float) -> int:
    """⌈(1 − missing_rate)·size⌉，先舍入到 9 位小数避免 0.2·10000 = 2000.0000000000002"""
    if not 0 <= missing_rate < 1:
        raise ValidationError(f"missing_rate must be in [0, 1), got {missing_rate}")
    return max(1, math.ceil(round((1 - missing_rate) * size, 9)))


def random_mask(rng: np.random.Generator, rows: int, cols: int,
                missing_rate: float) -> ObservationMask:
    """无放回均匀抽取 known_count 个位置"""
    size = rows * cols
    cells = rng.choice(size, size=known_count(size, missing_rate), replace=False)
    known = np.zeros(size, dtype=bool)
    known[cells] = True
    return ObservationMask(known.reshape(rows, cols))


def generate_problem(n: int, r: int, missing_rate: float,
                     seed: int) -> tuple[np.ndarray, ObservationMask]:
    """truth = L·Rᵀ，L、R 为 n×r 的 U(0,1) 矩阵；掩码由同一个种子决定"""
    if not 1 <= r <= n:
        raise ValidationError(f"need 1 <= r <= n, got n={n}, r={r}")
    rng = np.random.default_rng(seed)
    L = rng.uniform(0.0, 1.0, size=(n, r))
    R = rng.uniform(0.0, 1.0, size=(n, r))
    mask = random_mask(rng, n, n, missing_rate)
    dim = 2 * n * r - r * r
    if mask.m <= dim:
        logger.warning(f"n={n} r={r}: {mask.m} known entries do not exceed the manifold "
                       f"dimension {dim}; completion is not identifiable")
    return L @ R.T, mask


def _pairs(spec: ExperimentSpec) -> list[tuple[int, float]]:
    ranks, rates = list(spec.ranks), list(spec.missing_rates)
    if len(ranks) == 1 and len(rates) > 1:
        ranks = ranks * len(rates)
    elif len(rates) == 1 and len(ranks) > 1:
        rates = rates * len(ranks)
    if len(ranks) != len(rates):
        raise ValidationError(
            f"ranks ({len(ranks)}) and missing_rates ({len(rates)}) must pair up row by row")
    return list(zip(ranks, rates))


def _solve_trial(spec: ExperimentSpec, r: int, missing_rate: float,
                 seed: int) -> tuple[MetricsRecord, float, bool]:
    truth, mask = generate_problem(spec.n, r, missing_rate, seed)
    config = CompletionConfig(guess_rank=r, tol=spec.tol, max_iters=spec.max_iters,
                              init=spec.init, record_trace=False)
    result = ap_complete(project_mask(truth, mask), mask, config)
    metrics = completion_metrics(result.X_star, truth, mask, r, Y=result.Y_star)
    return metrics, result.elapsed, result.converged


def run_table(spec: ExperimentSpec) -> list[TableRow]:
    """每个 (rank, missing_rate) 行做 trials 次补全，取 M.C.E、A.R.E 与耗时的平均"""
    rows: list[TableRow] = []
    for ri, (r, rate) in enumerate(_pairs(spec)):
        def trial(t: int, ri: int = ri, r: int = r, rate: float = rate):
            try:
                return _solve_trial(spec, r, rate, derive_seed(spec.seed, ri, t))
            except ApkitError:
                logger.warning(f"Table trial rank={r} M.R.={rate} t={t} failed", exc_info=True)
                return None

        outcomes = run_indexed(trial, spec.trials, spec.workers)
        done = [o for o in outcomes if o is not None]
        if done:
            mce = float(np.mean([m.mce for m, _, _ in done]))
            are = float(np.mean([m.are for m, _, _ in done]))
            elapsed = float(np.mean([t for _, t, _ in done]))
        else:
            mce = are = elapsed = math.nan
        m = known_count(spec.n * spec.n, rate)
        row = TableRow(
            rank=r, missing_rate=rate, or_ratio=m / (2 * spec.n * r - r * r),
            mce=mce, are=are, time=elapsed, seed=spec.seed,
            converged=sum(1 for _, _, c in done if c),
            trials=spec.trials, failures=spec.trials - len(done),
        )
        logger.info(f"rank={r} M.R.={rate:.2f}: M.C.E={mce:.4e} A.R.E={are:.4e} "
                    f"time={fmt_seconds(elapsed) if done else 'n/a'} "
                    f"converged={row.converged}/{spec.trials}")
        rows.append(row)
    return rows


def _succeeded(metrics: MetricsRecord, criterion: Criterion, success_tol: float) -> bool:
    value = metrics.rel_fro if criterion == Criterion.REL_FRO else metrics.mce
    return value < success_tol


def max_rank_search(spec: ExperimentSpec) -> list[MaxRankRow]:
    """从 r = 1 开始，所有 trials 都成功才把 r 加一；报告最后一个全部成功的秩"""
    rows: list[MaxRankRow] = []
    for ri, rate in enumerate(spec.missing_rates):
        limit = max_identifiable_rank(spec.n, known_count(spec.n * spec.n, rate))
        best = None
        for r in range(1, limit + 1):
            def trial(t: int, ri: int = ri, r: int = r, rate: float = rate) -> bool:
                try:
                    metrics, _, _ = _solve_trial(spec, r, rate, derive_seed(spec.seed, ri, r, t))
                except ApkitError:
                    logger.warning(f"Max-rank trial rank={r} M.R.={rate} t={t} failed",
                                   exc_info=True)
                    return False
                return _succeeded(metrics, spec.criterion, spec.success_tol)

            if not all(run_indexed(trial, spec.trials, spec.workers)):
                break
            best = r
            logger.debug(f"M.R.={rate:.2f}: rank {r} recovered in all {spec.trials} trials")
        logger.info(f"M.R.={rate:.2f}: largest recoverable rank = {best if best else 'none'}")
        rows.append(MaxRankRow(missing_rate=rate, max_rank=best,
                               criterion=spec.criterion.value,
                               success_tol=spec.success_tol, trials=spec.trials))
    return rows


def run_sparse_figure(spec: ExperimentSpec) -> list[FrequencyRow]:
    """稀疏恢复频率随 s 的变化，每个随机矩阵分布一条曲线"""
    if not spec.s_values:
        raise ValidationError("sparse figure needs at least one sparsity value")
    rows: list[FrequencyRow] = []
    for ensemble in spec.ensembles:
        rows.extend(recovery_frequency(
            n=spec.n, N=spec.sparse_cols, s_values=spec.s_values, trials=spec.trials,
            ensemble=ensemble, seed=spec.seed, tol=spec.success_tol,
            criterion=spec.criterion, solve_tol=spec.tol, max_iters=spec.max_iters,
            workers=spec.workers,
        ))
    return rows


def frequency_rows(rows: list[FrequencyRow]) -> list[tuple]:
    return [(r.s, r.successes, r.trials, r.frequency, r.ensemble, r.failures) for r in rows]
