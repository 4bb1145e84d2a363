import numpy as np
import pytest

from apkit.core.errors import DimensionError, InsufficientDataError, ValidationError
from apkit.core.linalg import numerical_rank, project_affine_mask, project_mask, svd_truncate
from apkit.core.models import CompletionConfig, InitMethod, ObservationMask
from apkit.services.completion import (
    ap_complete,
    complete_with_rank_escalation,
    completion_metrics,
    estimate_rate,
    fixed_point_residuals,
    rank_one_pursuit_init,
)
from apkit.services.tangent import transversality_report

from .conftest import low_rank, mask_with_m


def _random_problem(rng, n=20, r=2, missing=0.4):
    truth = low_rank(rng, n, r)
    mask = mask_with_m(rng, n, round((1 - missing) * n * n))
    return truth, mask


def assert_trace_identities(result, truth_scale):
    trace = result.trace
    gaps = trace.gap_norms
    assert np.all(np.diff(gaps) <= 1e-12)
    lhs = np.sqrt(trace.step_norms ** 2 + trace.omega_gaps ** 2)
    np.testing.assert_allclose(lhs, gaps, rtol=1e-9, atol=1e-13 * truth_scale)
    np.testing.assert_allclose(trace.step_norms, trace.offmask_gaps, rtol=1e-10,
                               atol=1e-13 * truth_scale)
    assert np.sum(trace.step_norms ** 2) <= gaps[0] ** 2 + 1e-8


def test_full_mask_is_a_fixed_point(rng):
    M = low_rank(rng, 6, 2)
    result = ap_complete(M, ObservationMask.full(6, 6), CompletionConfig(guess_rank=2))
    assert result.converged
    assert result.iters == 1
    np.testing.assert_allclose(result.X_star, M, atol=1e-10)


def test_random_rank2_recovered(rng):
    truth, mask = _random_problem(rng)
    result = ap_complete(project_mask(truth, mask), mask, CompletionConfig(guess_rank=2),
                         truth=truth)
    assert result.converged
    assert result.trace.errors('truth_mce')[-1] < 1e-3
    assert numerical_rank(result.Y_star) <= 2
    np.testing.assert_array_equal(result.X_star[mask.array], truth[mask.array])


def test_fixture_converges_linearly(rank2_fixture):
    truth, mask, observed = rank2_fixture
    assert transversality_report(truth, mask, 2).certified_linear
    result = ap_complete(observed, mask, CompletionConfig(guess_rank=2, max_iters=5000),
                         truth=truth)
    assert result.converged
    assert result.iters <= 5000
    assert np.max(np.abs(result.X_star - truth)) < 1e-5
    assert result.estimated_rate is not None
    assert 0 < result.estimated_rate < 1
    assert_trace_identities(result, np.linalg.norm(truth))


def test_trace_identities_on_random_runs(rng):
    for _ in range(5):
        truth, mask = _random_problem(rng, n=12, r=2, missing=0.35)
        result = ap_complete(project_mask(truth, mask), mask,
                             CompletionConfig(guess_rank=2, max_iters=3000), truth=truth)
        assert_trace_identities(result, np.linalg.norm(truth))


def test_iterates_stay_feasible_and_gradient_is_orthogonal(rng):
    truth, mask = _random_problem(rng, n=10, r=2, missing=0.3)
    observed = project_mask(truth, mask)
    X = project_affine_mask(observed, mask, observed)
    for k in range(30):
        Y, _ = svd_truncate(X, 2)
        if k in (0, 10, 29):
            D = X - Y
            for _ in range(20):
                A, B = rng.standard_normal((2, 10, 10))
                inner = np.sum((A @ Y + Y @ B) * D)
                bound = 1e-8 * np.linalg.norm(A) * np.linalg.norm(Y) * np.linalg.norm(D)
                assert abs(inner) <= bound + 1e-14
        X = project_affine_mask(Y, mask, observed)
        np.testing.assert_array_equal(X[mask.array], observed[mask.array])


def test_fixed_point_residuals_at_convergence(rng):
    truth, mask = _random_problem(rng, n=15, r=3, missing=0.2)
    result = ap_complete(project_mask(truth, mask), mask,
                         CompletionConfig(guess_rank=3, max_iters=5000))
    assert result.converged
    a, b = fixed_point_residuals(result.X_star, result.Y_star)
    scale = np.linalg.norm(result.Y_star) * result.gap
    assert a <= 1e-6 * scale + 1e-10
    assert b <= 1e-6 * scale + 1e-10


def test_fixed_point_residuals_trivial(rng):
    X = rng.standard_normal((4, 4))
    assert fixed_point_residuals(X, X) == (0.0, 0.0)
    assert fixed_point_residuals(X, np.zeros((4, 4))) == (0.0, 0.0)
    with pytest.raises(DimensionError):
        fixed_point_residuals(X, np.zeros((3, 4)))


def test_rate_below_one_near_certified_truth(rank2_fixture, rng):
    truth, mask, observed = rank2_fixture
    off = ObservationMask(~mask.array)
    start = truth + 1e-3 * project_mask(rng.standard_normal(truth.shape), off)
    config = CompletionConfig(guess_rank=2, init=InitMethod.CUSTOM, custom_init=start, tol=1e-12,
                              max_iters=5000)
    result = ap_complete(observed, mask, config, truth=truth)
    assert result.estimated_rate is not None
    assert result.estimated_rate < 1


def test_non_convergence_is_reported(rng):
    truth, mask = _random_problem(rng, n=12, r=3, missing=0.5)
    result = ap_complete(project_mask(truth, mask), mask,
                         CompletionConfig(guess_rank=1, max_iters=5, tol=1e-12))
    assert not result.converged
    assert result.iters == 5
    assert result.gap > 0


def test_guess_rank_too_large():
    with pytest.raises(DimensionError):
        ap_complete(np.ones((3, 3)), ObservationMask.full(3, 3), CompletionConfig(guess_rank=4))


def test_config_validation():
    with pytest.raises(ValidationError):
        CompletionConfig(guess_rank=0)
    with pytest.raises(ValidationError):
        CompletionConfig(guess_rank=2, tol=0)
    with pytest.raises(ValidationError):
        CompletionConfig(guess_rank=2, init=InitMethod.CUSTOM)


def test_pursuit_recovers_rank_one_on_full_mask(rng):
    M = np.outer(rng.standard_normal(5), rng.standard_normal(6))
    X = rank_one_pursuit_init(M, ObservationMask.full(5, 6), 1)
    np.testing.assert_allclose(X, M, atol=1e-8)


def test_pursuit_residual_nonincreasing(rng):
    for _ in range(10):
        M = low_rank(rng, 10, 3)
        mask = mask_with_m(rng, 10, 60)
        residuals = [
            np.linalg.norm(project_mask(M - rank_one_pursuit_init(M, mask, k), mask))
            for k in range(1, 6)
        ]
        assert np.all(np.diff(residuals) <= 1e-10)


def test_pursuit_rejects_zero_steps(rng):
    with pytest.raises(ValidationError):
        rank_one_pursuit_init(np.ones((3, 3)), ObservationMask.full(3, 3), 0)


def test_pursuit_init_completes(rng):
    truth, mask = _random_problem(rng, n=30, r=2, missing=0.6)
    config = CompletionConfig(guess_rank=2, init=InitMethod.RANK_ONE_PURSUIT)
    result = ap_complete(project_mask(truth, mask), mask, config)
    assert np.max(np.abs(result.X_star - truth)) < 1e-3


def test_estimate_rate_geometric():
    assert estimate_rate([0.5 ** k for k in range(13)]) == pytest.approx(0.5, abs=1e-6)
    assert estimate_rate([0.3] * 12) == pytest.approx(1.0)


def test_estimate_rate_needs_data():
    with pytest.raises(InsufficientDataError):
        estimate_rate([1.0, 0.5, 0.25])
    with pytest.raises(InsufficientDataError):
        estimate_rate([1.0] * 5 + [1e-15] * 20)


def test_completion_metrics_examples():
    truth = np.eye(2)
    X = truth.copy()
    X[0, 1] = 0.5
    full = ObservationMask.full(2, 2)
    metrics = completion_metrics(X, truth, full, 1)
    assert metrics.mce == 0.5

    exact = completion_metrics(truth, truth, full, 1)
    assert exact.mce == 0.0
    assert exact.are == 0.0
    assert exact.rel_fro == 0.0
    assert exact.missing_rate == 0.0


def test_oversampling_ratio_matches_table_row():
    n, r = 100, 2
    known = np.zeros(n * n, dtype=bool)
    known[:2000] = True
    mask = ObservationMask(known.reshape(n, n))
    metrics = completion_metrics(np.zeros((n, n)), np.ones((n, n)), mask, r)
    assert metrics.or_ratio == pytest.approx(2000 / 396)
    assert metrics.missing_rate == pytest.approx(0.8)
    assert metrics.known_rate == pytest.approx(0.2)


def test_completion_metrics_shape_mismatch():
    with pytest.raises(DimensionError):
        completion_metrics(np.zeros((2, 3)), np.zeros((2, 2)), ObservationMask.full(2, 2), 1)


def test_rank_escalation_finds_true_rank(rng):
    truth, mask = _random_problem(rng, n=20, r=3, missing=0.3)
    config = CompletionConfig(guess_rank=1, max_iters=3000, record_trace=False)
    result = complete_with_rank_escalation(project_mask(truth, mask), mask, config)
    assert result.guess_rank == 3
    assert result.gap <= 1e-4
