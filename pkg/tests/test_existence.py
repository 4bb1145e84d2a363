from math import factorial, prod

import pytest

from apkit.core.errors import NumericalError, ValidationError
from apkit.services.existence import (
    degree_bound,
    existence_report,
    manifold_dimension,
    max_identifiable_rank,
)


def _degree_by_factorials(n: int, r: int) -> int:
    num = prod(factorial(n + i) * factorial(i) for i in range(n - r))
    den = prod(factorial(r + i) * factorial(n - r + i) for i in range(n - r))
    assert num % den == 0
    return num // den


@pytest.mark.parametrize("n,r,expected", [(2, 1, 2), (3, 1, 6), (3, 2, 3), (4, 4, 1), (5, 5, 1)])
def test_degree_bound_examples(n, r, expected):
    assert degree_bound(n, r) == expected


def test_degree_bound_matches_factorial_formula():
    for n in range(1, 13):
        for r in range(1, n + 1):
            assert degree_bound(n, r) == _degree_by_factorials(n, r)


def test_degree_bound_is_positive_integer():
    for n in range(1, 31):
        for r in range(1, n + 1):
            value = degree_bound(n, r)
            assert isinstance(value, int)
            assert value >= 1


def test_degree_bound_is_exact_for_large_n():
    assert degree_bound(30, 15) == _degree_by_factorials(30, 15)
    assert degree_bound(30, 15) > 2 ** 64


@pytest.mark.parametrize("n,r", [(3, 4), (3, 0), (0, 0)])
def test_degree_bound_domain(n, r):
    with pytest.raises(ValidationError):
        degree_bound(n, r)


def test_degree_bound_rejects_non_integer_product(monkeypatch):
    from apkit.services import existence

    # C(n+i, r)/C(r+i, r) replaced by (n+i)/(r+i): 4/2 · 5/3 = 10/3 for n=4, r=2
    monkeypatch.setattr(existence, "comb", lambda a, b: a)
    with pytest.raises(NumericalError, match="not an integer"):
        degree_bound(4, 2)


def test_manifold_dimension():
    assert manifold_dimension(15, 2) == 56
    assert manifold_dimension(100, 2) == 396
    assert manifold_dimension(7, 7) == 49
    for n in range(2, 12):
        for r in range(1, n):
            assert manifold_dimension(n, r) < n * n


def test_existence_report_examples():
    small = existence_report(2, 1, 2)
    assert not small.sample_ok
    assert small.degree_bound == 2
    assert small.manifold_dim == 3

    fixture = existence_report(15, 2, 162)
    assert fixture.sample_ok
    assert fixture.unknowns == 225 - 162

    for r in range(1, 6):
        assert existence_report(6, r, 36).sample_ok


def test_existence_report_minor_count():
    report = existence_report(4, 1, 10)
    assert report.minor_equations == 36
    assert report.overdetermined
    assert existence_report(4, 4, 0).minor_equations == 0


def test_existence_report_rejects_bad_m():
    with pytest.raises(ValidationError):
        existence_report(3, 1, 10)
    with pytest.raises(ValidationError):
        existence_report(3, 1, -1)


def test_existence_report_serializes_big_degree():
    data = existence_report(30, 15, 900).to_dict()
    assert data['degree_bound'] == str(degree_bound(30, 15))


def test_max_identifiable_rank():
    assert max_identifiable_rank(15, 166) == 7
    assert max_identifiable_rank(100, 2000) == 10
    assert max_identifiable_rank(100, 1) == 0
    assert max_identifiable_rank(4, 16) == 3
