"""
apkit CLI 入口点
退出码：0 成功，1 输入校验失败，2 数值失败或未预期的错误
"""
import argparse
import sys
from pathlib import Path

from apkit.core.config import Config, load_config
from apkit.core.errors import ApkitError
from apkit.core.logger import get_logger, setup_logging

logger = get_logger(__name__)


def _add_common(p: argparse.ArgumentParser):
    p.add_argument('--config', type=Path, help='key=value 配置文件，命令行参数优先')
    p.add_argument('-v', '--verbose', action='store_true', help='控制台输出 DEBUG 日志')


class ApkitArgumentParser(argparse.ArgumentParser):
    """参数错误属于输入校验失败，退出码为 1（argparse 默认为 2）"""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = ApkitArgumentParser(
        prog='apkit',
        description='apkit - 交替投影矩阵补全、ℓ0 稀疏恢复与收敛性证书',
    )
    parser.add_argument('--version', action='store_true', help='显示版本信息')
    sub = parser.add_subparsers(dest='command', metavar='COMMAND')

    p = sub.add_parser('complete', help='交替投影补全一个矩阵')
    _add_common(p)
    p.add_argument('--observed', type=Path, required=True, help='观测矩阵 CSV')
    p.add_argument('--mask', type=Path, help='已知位置文件（1-based i,j）；缺省时取非零元素')
    p.add_argument('--rank', type=int, help='猜测秩 r_g')
    p.add_argument('--tol', type=float)
    p.add_argument('--max-iters', type=int)
    p.add_argument('--init', choices=['maskfill', 'or1mp'])
    p.add_argument('--pursuit-steps', type=int, help='OR1MP 步数（缺省与猜测秩相同）')
    p.add_argument('--escalate-rank', action='store_true', default=None,
                   help='‖X*−Y*‖ 偏大时自动提升猜测秩')
    p.add_argument('--truth', type=Path, help='真值矩阵 CSV，仅用于误差轨迹与指标')
    p.add_argument('--trace', type=Path, help='迭代轨迹 CSV')
    p.add_argument('--out', type=Path, help='X* 输出 CSV（缺省写到 stdout）')
    p.add_argument('--out-y', type=Path, help='Y* 输出 CSV')
    p.add_argument('--report', type=Path, help='运行摘要 JSON')
    p.set_defaults(handler=cmd_complete)

    p = sub.add_parser('sparse', help='交替投影求稀疏解')
    _add_common(p)
    p.add_argument('--A', dest='A', type=Path, required=True, help='感知矩阵 CSV (n×N)')
    p.add_argument('--b', dest='b', type=Path, required=True, help='观测向量，每行一个数')
    p.add_argument('--s', dest='s', type=int, help='稀疏度')
    p.add_argument('--tol', type=float)
    p.add_argument('--max-iters', type=int)
    p.add_argument('--init', choices=['minnorm', 'random'])
    p.add_argument('--seed', type=int)
    p.add_argument('--also-step-tol', action='store_true', default=None,
                   help='同时要求 ‖x_{k+1}−x_k‖ < tol 才停止')
    p.add_argument('--out', type=Path, help='解向量输出（缺省写到 stdout）')
    p.add_argument('--report', type=Path, help='运行摘要 JSON')
    p.set_defaults(handler=cmd_sparse)

    p = sub.add_parser('diagnose', help='横截性证书（n <= 64）')
    _add_common(p)
    p.add_argument('--matrix', type=Path, required=True, help='n×n 矩阵 CSV')
    p.add_argument('--mask', type=Path, required=True, help='已知位置文件（1-based i,j）')
    p.add_argument('--rank', type=int, required=True)
    p.add_argument('--no-contraction', action='store_true', help='不计算切空间夹角')
    p.add_argument('--out', type=Path, help='报告 JSON（缺省写到 stdout）')
    p.set_defaults(handler=cmd_diagnose)

    p = sub.add_parser('existence', help='维数与补全个数的次数上界')
    _add_common(p)
    p.add_argument('--n', type=int, required=True)
    p.add_argument('--r', type=int, required=True)
    p.add_argument('--m', type=int, required=True, help='已知元素个数')
    p.set_defaults(handler=cmd_existence)

    p = sub.add_parser('bench-table', help='随机低秩矩阵补全表格实验')
    _add_common(p)
    p.add_argument('--n', type=int)
    p.add_argument('--ranks', help='逗号分隔，与 --missing-rates 逐行配对')
    p.add_argument('--missing-rates', help='逗号分隔')
    _add_bench_common(p)
    p.add_argument('--init', choices=['maskfill', 'or1mp'])
    p.add_argument('--tol', type=float)
    p.add_argument('--max-iters', type=int)
    p.set_defaults(handler=cmd_bench_table)

    p = sub.add_parser('bench-maxrank', help='搜索每个缺失率下可恢复的最大秩')
    _add_common(p)
    p.add_argument('--n', type=int)
    p.add_argument('--missing-rates', help='逗号分隔')
    _add_bench_common(p)
    p.add_argument('--init', choices=['maskfill', 'or1mp'])
    p.add_argument('--success-tol', type=float)
    p.add_argument('--criterion', choices=['maxnorm', 'relfro'])
    p.add_argument('--tol', type=float, help='AP 停止阈值')
    p.add_argument('--max-iters', type=int)
    p.set_defaults(handler=cmd_bench_maxrank)

    p = sub.add_parser('bench-sparse', aliases=['sparse-bench'], help='稀疏恢复频率曲线')
    _add_common(p)
    p.add_argument('--n', type=int, help='感知矩阵行数')
    p.add_argument('--N', dest='N', type=int, help='感知矩阵列数')
    p.add_argument('--s', dest='s', help='稀疏度 a:b:step（含端点）或逗号分隔')
    _add_bench_common(p)
    p.add_argument('--ensemble', choices=['gaussian', 'uniform', 'both'])
    p.add_argument('--tol', type=float, help='成功阈值')
    p.add_argument('--criterion', choices=['maxnorm', 'relfro'])
    p.add_argument('--solve-tol', type=float, help='AP 停止阈值')
    p.add_argument('--max-iters', type=int)
    p.set_defaults(handler=cmd_bench_sparse)

    p = sub.add_parser('image', help='灰度图像补全')
    _add_common(p)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument('--image', type=Path, help='P2/P5 灰度 PGM')
    src.add_argument('--synthetic', help='合成低秩图像 ROWSxCOLS:RANK')
    p.add_argument('--missing-rate', type=float)
    p.add_argument('--rank', type=int)
    p.add_argument('--init', choices=['maskfill', 'or1mp'])
    p.add_argument('--seed', type=int)
    p.add_argument('--tol', type=float)
    p.add_argument('--max-iters', type=int)
    p.add_argument('--masked-out', type=Path, help='遮挡后的图像 PGM')
    p.add_argument('--init-out', type=Path, help='仅初值的重建 PGM')
    p.add_argument('--out', type=Path, help='恢复后的图像 PGM')
    p.add_argument('--report', type=Path, help='运行摘要 JSON（缺省写到 stdout）')
    p.set_defaults(handler=cmd_image)

    p = sub.add_parser('docs', help='查看随包文档')
    p.add_argument('topic', nargs='?', help='文档名或序号；缺省列出全部')
    p.set_defaults(handler=cmd_docs)

    return parser


def _add_bench_common(p: argparse.ArgumentParser):
    p.add_argument('--trials', type=int)
    p.add_argument('--seed', type=int)
    p.add_argument('--workers', type=int, help='并行线程数，结果与线程数无关')
    p.add_argument('--out', type=Path, help='CSV 输出（缺省写到 stdout）')


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.version:
        from apkit import __version__
        print(f"apkit v{__version__}")
        return 0
    if not getattr(args, 'handler', None):
        parser.print_help()
        return 1

    verbose = getattr(args, 'verbose', False)
    setup_logging(console_level='DEBUG' if verbose else 'INFO')
    try:
        cfg = load_config(getattr(args, 'config', None))
        setup_logging(console_level='DEBUG' if verbose else cfg.log.console_level,
                      file_level=cfg.log.file_level)
        args.handler(args, cfg)
        return 0
    except ApkitError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    except Exception as e:
        logger.error(f"Unexpected error: {e}", exc_info=True)
        return 2


def _emit_csv(target: Path | None, header, rows):
    from apkit.core.storage import write_rows
    write_rows(target if target else sys.stdout, header, rows)


def cmd_complete(args, cfg: Config):
    import numpy as np

    from apkit.core.models import CompletionConfig, ObservationMask
    from apkit.core.storage import dump_json, read_mask, read_matrix, write_matrix, write_rows
    from apkit.services.completion import (
        ap_complete,
        complete_with_rank_escalation,
        completion_metrics,
        fixed_point_residuals,
    )

    cfg.update({
        'completion.guess_rank': args.rank,
        'completion.tol': args.tol,
        'completion.max_iters': args.max_iters,
        'completion.init': args.init,
        'completion.pursuit_steps': args.pursuit_steps,
        'completion.escalate_rank': args.escalate_rank,
    })
    settings = cfg.completion
    observed = read_matrix(args.observed)
    if args.mask:
        mask = read_mask(args.mask, observed.shape)
    else:
        mask = ObservationMask(observed != 0)
        logger.info(f"No mask given, treating {mask.m} nonzero entries as known")
    truth = read_matrix(args.truth) if args.truth else None

    config = CompletionConfig(
        guess_rank=settings.guess_rank, tol=settings.tol, max_iters=settings.max_iters,
        init=settings.init, pursuit_steps=settings.pursuit_steps or None,
        record_trace=True,
    )
    if settings.escalate_rank:
        result = complete_with_rank_escalation(observed, mask, config,
                                               gap_tol=settings.escalate_gap, truth=truth)
    else:
        result = ap_complete(observed, mask, config, truth=truth)

    if args.out:
        write_matrix(args.out, result.X_star)
    else:
        np.savetxt(sys.stdout, result.X_star, fmt='%.17g', delimiter=',')
    if args.out_y:
        write_matrix(args.out_y, result.Y_star)
    if args.trace and result.trace is not None:
        write_rows(args.trace, result.trace.COLUMNS, result.trace.rows())

    summary = {
        'iters': result.iters,
        'converged': result.converged,
        'guess_rank': result.guess_rank,
        'gap': result.gap,
        'estimated_rate': result.estimated_rate,
        'fixed_point_residuals': fixed_point_residuals(result.X_star, result.Y_star),
        'elapsed': result.elapsed,
    }
    if truth is not None:
        summary['metrics'] = completion_metrics(
            result.X_star, truth, mask, result.guess_rank, Y=result.Y_star).__dict__
    if args.report:
        dump_json(summary, args.report)


def cmd_sparse(args, cfg: Config):
    import numpy as np

    from apkit.core.models import SparseConfig, SparseProblem
    from apkit.core.storage import dump_json, read_matrix, read_vector, write_vector
    from apkit.services.sparse import ap_sparse, certify_null_intersection

    cfg.update({
        'sparse.sparsity': args.s,
        'sparse.tol': args.tol,
        'sparse.max_iters': args.max_iters,
        'sparse.init': args.init,
        'sparse.seed': args.seed,
        'sparse.also_step_tol': args.also_step_tol,
    })
    settings = cfg.sparse
    problem = SparseProblem(read_matrix(args.A), read_vector(args.b), settings.sparsity)
    config = SparseConfig(tol=settings.tol, max_iters=settings.max_iters, init=settings.init,
                          seed=settings.seed, also_step_tol=settings.also_step_tol)
    result = ap_sparse(problem, config)
    logger.info(f"Sparse AP: converged={result.converged} after {result.iters} iterations")
    if result.tie_flag:
        logger.warning("Equal magnitudes at the thresholding boundary; lowest indices were kept")

    if args.out:
        write_vector(args.out, result.x)
    else:
        np.savetxt(sys.stdout, result.x, fmt='%.17g')
    if args.report:
        dump_json({
            'iters': result.iters,
            'converged': result.converged,
            'support': [i + 1 for i in result.support],
            'tie_flag': result.tie_flag,
            'support_stable_since': result.support_stable_since,
            'null_check': certify_null_intersection(problem.A, problem.s).value,
        }, args.report)


def cmd_diagnose(args, cfg: Config):
    from apkit.core.storage import dump_json, read_mask, read_matrix
    from apkit.services.tangent import transversality_report

    M = read_matrix(args.matrix)
    mask = read_mask(args.mask, M.shape)
    report = transversality_report(M, mask, args.rank, with_contraction=not args.no_contraction)
    logger.info(f"rank T^Ω = {report.rank_T_omega} / {report.dim_manifold}, "
                f"certified_linear = {report.certified_linear}")
    dump_json(report.to_dict(), args.out or sys.stdout)


def cmd_existence(args, cfg: Config):
    from apkit.core.storage import dump_json
    from apkit.services.existence import existence_report

    dump_json(existence_report(args.n, args.r, args.m).to_dict(), sys.stdout)


def cmd_bench_table(args, cfg: Config):
    from apkit.core.models import ExperimentKind, ExperimentSpec, TableRow
    from apkit.services.bench import run_table

    cfg.update({
        'bench.n': args.n, 'bench.ranks': args.ranks, 'bench.missing_rates': args.missing_rates,
        'bench.trials': args.trials, 'bench.seed': args.seed, 'bench.workers': args.workers,
        'bench.init': args.init, 'bench.tol': args.tol, 'bench.max_iters': args.max_iters,
    })
    b = cfg.bench
    spec = ExperimentSpec(
        kind=ExperimentKind.TABLE_RUN, n=b.n, ranks=b.ranks, missing_rates=b.missing_rates,
        trials=b.trials, seed=b.seed, init=b.init, tol=b.tol, max_iters=b.max_iters,
        workers=b.workers,
    )
    rows = run_table(spec)
    _emit_csv(args.out, TableRow.COLUMNS, [row.as_tuple() for row in rows])


def cmd_bench_maxrank(args, cfg: Config):
    from apkit.core.models import ExperimentKind, ExperimentSpec, MaxRankRow
    from apkit.services.bench import max_rank_search

    cfg.update({
        'bench.n': args.n, 'bench.missing_rates': args.missing_rates,
        'bench.trials': args.trials, 'bench.seed': args.seed, 'bench.workers': args.workers,
        'bench.init': args.init, 'bench.success_tol': args.success_tol,
        'bench.criterion': args.criterion, 'bench.maxrank_tol': args.tol,
        'bench.max_iters': args.max_iters,
    })
    b = cfg.bench
    spec = ExperimentSpec(
        kind=ExperimentKind.MAX_RANK_SEARCH, n=b.n, missing_rates=b.missing_rates,
        trials=b.trials, seed=b.seed, init=b.init, tol=b.maxrank_tol, max_iters=b.max_iters,
        success_tol=b.success_tol, criterion=b.criterion, workers=b.workers,
    )
    rows = max_rank_search(spec)
    _emit_csv(args.out, MaxRankRow.COLUMNS, [row.as_tuple() for row in rows])


def cmd_bench_sparse(args, cfg: Config):
    from apkit.core.models import Ensemble, ExperimentKind, ExperimentSpec
    from apkit.services.bench import FREQUENCY_COLUMNS, frequency_rows, run_sparse_figure

    cfg.update({
        'bench.sparse_rows': args.n, 'bench.sparse_cols': args.N, 'bench.s_values': args.s,
        'bench.trials': args.trials, 'bench.seed': args.seed, 'bench.workers': args.workers,
        'bench.ensemble': args.ensemble, 'bench.sparse_tol': args.tol,
        'bench.criterion': args.criterion, 'sparse.tol': args.solve_tol,
        'bench.sparse_max_iters': args.max_iters,
    })
    b = cfg.bench
    if b.ensemble == 'both':
        ensembles = [Ensemble.GAUSSIAN, Ensemble.UNIFORM]
    else:
        ensembles = [Ensemble(b.ensemble)]
    spec = ExperimentSpec(
        kind=ExperimentKind.SPARSE_FREQ, n=b.sparse_rows, sparse_cols=b.sparse_cols,
        s_values=b.s_values, trials=b.trials, seed=b.seed, ensembles=ensembles,
        success_tol=b.sparse_tol, criterion=b.criterion, tol=cfg.sparse.tol,
        max_iters=b.sparse_max_iters, workers=b.workers,
    )
    _emit_csv(args.out, FREQUENCY_COLUMNS, frequency_rows(run_sparse_figure(spec)))


def cmd_image(args, cfg: Config):
    from apkit.core.models import ImageJob
    from apkit.core.storage import dump_json
    from apkit.services.image import image_recover, parse_synthetic

    cfg.update({
        'image.missing_rate': args.missing_rate, 'image.rank': args.rank,
        'image.init': args.init, 'image.seed': args.seed, 'image.tol': args.tol,
        'image.max_iters': args.max_iters,
    })
    s = cfg.image
    job = ImageJob(
        input_path=args.image, missing_rate=s.missing_rate, rank=s.rank, init=s.init,
        seed=s.seed, tol=s.tol, max_iters=s.max_iters, masked_path=args.masked_out,
        recovered_path=args.out, init_path=args.init_out,
        synthetic=parse_synthetic(args.synthetic) if args.synthetic else None,
    )
    recovery = image_recover(job)
    dump_json(recovery.to_dict(), args.report or sys.stdout)


def cmd_docs(args, cfg: Config):
    from apkit.core.errors import ValidationError
    from apkit.utils.docs_loader import find_doc, list_doc_files, load_doc

    if not args.topic:
        for path in list_doc_files():
            title, _ = load_doc(path)
            print(f"{path.stem:<24} {title}")
        return
    path = find_doc(args.topic)
    if path is None:
        raise ValidationError(f"No document named '{args.topic}'")
    print(load_doc(path)[1])


if __name__ == "__main__":
    sys.exit(main())
