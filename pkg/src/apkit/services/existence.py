"""
补全解的存在性与个数：精确组合量
"""
from fractions import Fraction
from math import comb

from apkit.core.errors import NumericalError, ValidationError
from apkit.core.models import ExistenceReport


def _check_rank(n: int, r: int):
    if n < 1 or not 1 <= r <= n:
        raise ValidationError(f"need 1 <= r <= n, got n={n}, r={r}")


def degree_bound(n: int, r: int) -> int:
    """∏_{i=0}^{n-r-1} C(n+i, r) / C(r+i, r)，秩 ≤ r 的 n×n 行列式簇的次数"""
    _check_rank(n, r)
    value = Fraction(1)
    for i in range(n - r):
        value *= Fraction(comb(n + i, r), comb(r + i, r))
    if value.denominator != 1:
        raise NumericalError(f"degree bound for n={n}, r={r} is not an integer: {value}")
    return value.numerator


def manifold_dimension(n: int, r: int) -> int:
    """秩 r 矩阵流形 M_r 的维数 2nr − r²"""
    _check_rank(n, r)
    return 2 * n * r - r * r


def max_identifiable_rank(n: int, m: int, cols: int | None = None) -> int:
    """满足 (rows+cols)·r − r² < m 的最大 r，没有则为 0"""
    cols = n if cols is None else cols
    best = 0
    for r in range(1, min(n, cols) + 1):
        if (n + cols) * r - r * r < m:
            best = r
        else:
            break
    return best


def existence_report(n: int, r: int, m: int) -> ExistenceReport:
    _check_rank(n, r)
    if not 0 <= m <= n * n:
        raise ValidationError(f"need 0 <= m <= n², got m={m} for n={n}")
    dim = manifold_dimension(n, r)
    unknowns = n * n - m
    # 所有 (r+1) 阶子式为零；r = n 时没有约束
    minor_equations = comb(n, r + 1) ** 2 if r < n else 0
    return ExistenceReport(
        n=n, r=r, m=m,
        manifold_dim=dim,
        sample_ok=m > dim,
        degree_bound=degree_bound(n, r),
        unknowns=unknowns,
        minor_equations=minor_equations,
        overdetermined=minor_equations > unknowns,
    )
