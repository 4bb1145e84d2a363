import json

import numpy as np
import pytest

from apkit.cli import main
from apkit.core import logger as logger_module
from apkit.core.errors import SingularGapError
from apkit.core.models import ObservationMask
from apkit.core.storage import read_matrix, read_rows, read_vector, write_mask, write_matrix

from .conftest import EXAMPLE1_M, low_rank


@pytest.fixture(autouse=True)
def isolated_logs(tmp_path, monkeypatch):
    log_dir = tmp_path / "logs"
    log_dir.mkdir()
    monkeypatch.setattr(logger_module, "get_log_dir", lambda: log_dir)
    yield log_dir
    logger_module.log_manager._clear_handlers()


def test_version(capsys):
    assert main(["--version"]) == 0
    assert capsys.readouterr().out.startswith("apkit v")


def test_no_command_prints_help(capsys):
    assert main([]) == 1
    assert "usage" in capsys.readouterr().out


def test_existence_json(capsys):
    assert main(["existence", "--n", "15", "--r", "2", "--m", "162"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["manifold_dim"] == 56
    assert report["sample_ok"] is True


def test_existence_rejects_bad_rank():
    assert main(["existence", "--n", "3", "--r", "4", "--m", "2"]) == 1


@pytest.mark.parametrize("argv", [
    ["complete", "--rank", "2"],
    ["complete", "--observed", "x.csv", "--init", "bogus"],
    ["complete", "--observed", "x.csv", "--rank", "two"],
    ["bench-table", "--trials", "1.5"],
    ["no-such-command"],
])
def test_argument_errors_exit_with_validation_code(argv, capsys):
    with pytest.raises(SystemExit) as excinfo:
        main(argv)
    assert excinfo.value.code == 1
    assert "usage" in capsys.readouterr().err


def test_help_still_exits_zero(capsys):
    with pytest.raises(SystemExit) as excinfo:
        main(["complete", "--help"])
    assert excinfo.value.code == 0


def test_complete_writes_outputs(tmp_path, rng):
    truth = low_rank(rng, 12, 2)
    mask = ObservationMask(rng.random((12, 12)) < 0.7)
    write_matrix(tmp_path / "obs.csv", np.where(mask.array, truth, 0.0))
    write_mask(tmp_path / "omega.csv", mask)
    write_matrix(tmp_path / "truth.csv", truth)
    code = main([
        "complete", "--observed", str(tmp_path / "obs.csv"), "--mask", str(tmp_path / "omega.csv"),
        "--rank", "2", "--tol", "1e-10", "--truth", str(tmp_path / "truth.csv"),
        "--trace", str(tmp_path / "trace.csv"), "--out", str(tmp_path / "X.csv"),
        "--out-y", str(tmp_path / "Y.csv"), "--report", str(tmp_path / "report.json"),
    ])
    assert code == 0
    np.testing.assert_allclose(read_matrix(tmp_path / "X.csv"), truth, atol=1e-6)
    rows = read_rows(tmp_path / "trace.csv")
    assert list(rows[0])[:6] == ["k", "step_norm", "gap_norm", "offmask_gap", "truth_mce",
                                 "truth_fro"]
    report = json.loads((tmp_path / "report.json").read_text(encoding="utf-8"))
    assert report["converged"] is True
    assert report["metrics"]["mce"] < 1e-6


def test_complete_infers_mask_and_prints(tmp_path, capsys):
    write_matrix(tmp_path / "obs.csv", np.array([[0.0, 4.0], [2.0, 8.0]]))
    code = main(["complete", "--observed", str(tmp_path / "obs.csv"), "--rank", "1",
                 "--tol", "1e-12"])
    assert code == 0
    X = np.loadtxt(capsys.readouterr().out.splitlines(), delimiter=",")
    np.testing.assert_allclose(X, EXAMPLE1_M, atol=1e-6)


def test_complete_missing_file_is_validation_error(tmp_path):
    assert main(["complete", "--observed", str(tmp_path / "none.csv"), "--rank", "1"]) == 1


def test_config_file_supplies_rank(tmp_path):
    write_matrix(tmp_path / "obs.csv", np.array([[0.0, 4.0], [2.0, 8.0]]))
    conf = tmp_path / "apkit.conf"
    conf.write_text("completion.guess_rank = 3\n", encoding="utf-8")
    code = main(["complete", "--config", str(conf), "--observed", str(tmp_path / "obs.csv")])
    assert code == 1


def test_diagnose_fixture(tmp_path, rank2_fixture):
    truth, mask, _ = rank2_fixture
    write_matrix(tmp_path / "M.csv", truth)
    write_mask(tmp_path / "omega.csv", mask)
    out = tmp_path / "diag.json"
    code = main(["diagnose", "--matrix", str(tmp_path / "M.csv"), "--mask",
                 str(tmp_path / "omega.csv"), "--rank", "2", "--out", str(out)])
    assert code == 0
    report = json.loads(out.read_text(encoding="utf-8"))
    assert report["rank_V_omega"] == 56
    assert report["certified_linear"] is True


def test_numerical_failure_exit_code(tmp_path, monkeypatch):
    from apkit.services import tangent

    def fail(*args, **kwargs):
        raise SingularGapError("no gap")

    monkeypatch.setattr(tangent, "transversality_report", fail)
    write_matrix(tmp_path / "M.csv", EXAMPLE1_M)
    (tmp_path / "omega.csv").write_text("1,2\n2,1\n")
    code = main(["diagnose", "--matrix", str(tmp_path / "M.csv"), "--mask",
                 str(tmp_path / "omega.csv"), "--rank", "1"])
    assert code == 2


def test_sparse_solves(tmp_path, rng):
    A = rng.standard_normal((20, 40))
    x_true = np.zeros(40)
    x_true[[3, 17, 31]] = [1.0, -2.0, 0.5]
    write_matrix(tmp_path / "A.csv", A)
    np.savetxt(tmp_path / "b.csv", A @ x_true, fmt="%.17g")
    code = main(["sparse", "--A", str(tmp_path / "A.csv"), "--b", str(tmp_path / "b.csv"),
                 "--s", "3", "--out", str(tmp_path / "x.csv"),
                 "--report", str(tmp_path / "r.json")])
    assert code == 0
    np.testing.assert_allclose(read_vector(tmp_path / "x.csv"), x_true, atol=1e-5)
    report = json.loads((tmp_path / "r.json").read_text(encoding="utf-8"))
    assert report["support"] == [4, 18, 32]


def test_sparse_bench_alias(capsys):
    code = main(["sparse-bench", "--n", "10", "--N", "20", "--s", "2:4:2", "--trials", "3",
                 "--seed", "1", "--max-iters", "2000"])
    assert code == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "s,successes,trials,frequency,ensemble,failures"
    assert [line.split(",")[0] for line in lines[1:]] == ["2", "4"]


def test_bench_table_csv(tmp_path):
    out = tmp_path / "table.csv"
    code = main(["bench-table", "--n", "15", "--ranks", "1,2", "--missing-rates", "0.3",
                 "--trials", "2", "--workers", "2", "--out", str(out)])
    assert code == 0
    rows = read_rows(out)
    assert [r["rank"] for r in rows] == ["1", "2"]
    assert all(float(r["mce"]) < 1e-3 for r in rows)


def test_bench_maxrank_csv(tmp_path):
    out = tmp_path / "maxrank.csv"
    code = main(["bench-maxrank", "--n", "20", "--missing-rates", "0.999", "--trials", "1",
                 "--out", str(out)])
    assert code == 0
    assert read_rows(out)[0]["max_rank"] == "none"


def _without_time(path) -> list[str]:
    lines = path.read_text(encoding="utf-8").splitlines()
    header = lines[0].split(",")
    if "time" not in header:
        return lines
    drop = header.index("time")
    return [",".join(c for i, c in enumerate(line.split(",")) if i != drop) for line in lines]


@pytest.mark.parametrize("argv", [
    ["bench-table", "--n", "12", "--ranks", "1,2", "--missing-rates", "0.3,0.4",
     "--trials", "3", "--seed", "5"],
    ["bench-maxrank", "--n", "10", "--missing-rates", "0.2,0.5", "--trials", "2",
     "--seed", "5", "--max-iters", "500"],
    ["bench-sparse", "--n", "8", "--N", "16", "--s", "1:3:1", "--trials", "4",
     "--seed", "5", "--ensemble", "both", "--max-iters", "500"],
])
def test_bench_csv_is_reproducible(tmp_path, argv):
    first, second = tmp_path / "first.csv", tmp_path / "second.csv"
    assert main([*argv, "--workers", "1", "--out", str(first)]) == 0
    assert main([*argv, "--workers", "3", "--out", str(second)]) == 0
    assert _without_time(first) == _without_time(second)
    if "time" not in first.read_text(encoding="utf-8").splitlines()[0]:
        assert first.read_bytes() == second.read_bytes()


def test_image_synthetic(tmp_path):
    out, report = tmp_path / "rec.pgm", tmp_path / "image.json"
    code = main(["image", "--synthetic", "24x24:2", "--missing-rate", "0.3", "--rank", "2",
                 "--tol", "1e-9", "--max-iters", "2000", "--out", str(out),
                 "--report", str(report)])
    assert code == 0
    assert out.read_bytes().startswith(b"P5")
    assert json.loads(report.read_text(encoding="utf-8"))["rmse"] < 1e-2


def test_docs(capsys):
    assert main(["docs"]) == 0
    listing = capsys.readouterr().out
    assert "completion" in listing
    assert main(["docs", "completion"]) == 0
    assert "apkit complete" in capsys.readouterr().out
    assert main(["docs", "no-such-topic"]) == 1


def test_log_file_written(isolated_logs, tmp_path):
    main(["complete", "--observed", str(tmp_path / "none.csv"), "--rank", "1"])
    assert any(isolated_logs.glob("apkit_*.log"))
