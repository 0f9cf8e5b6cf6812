import itertools
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from v2vauth.errors import ParameterError
from v2vauth.numtheory import Modulus, is_qr
from v2vauth.polyalg import (
    BiPoly,
    Family,
    SharePoint,
    UniPoly,
    eval_bi,
    eval_uni,
    gen_bipoly,
    inner_partial_y,
    interpolate_free_coeff,
    partial_x,
    partial_y,
    y_free_part,
)

M15 = 15
M_BIG = 1000003 * 999983


def direct_eval(coeffs, x, y, n):
    """Oracle: expand the double sum term by term."""
    return sum(c * x**a * y**b for a, row in enumerate(coeffs) for b, c in enumerate(row)) % n


def solve_coeffs(points, p):
    """Oracle: Gaussian elimination on the Vandermonde system mod p."""
    n = len(points)
    rows = [[pow(x, k, p) for k in range(n)] + [v % p] for x, v in points]
    for col in range(n):
        piv = next(r for r in range(col, n) if rows[r][col] % p)
        rows[col], rows[piv] = rows[piv], rows[col]
        inv = pow(rows[col][col], -1, p)
        rows[col] = [c * inv % p for c in rows[col]]
        for r in range(n):
            if r != col and rows[r][col]:
                f = rows[r][col]
                rows[r] = [(a - f * b) % p for a, b in zip(rows[r], rows[col])]
    return [rows[k][n] for k in range(n)]


def solve_free_coeff(points, p):
    return solve_coeffs(points, p)[0]


# -- univariate ---------------------------------------------------------------

@pytest.mark.parametrize("coeffs,n,y,expected", [((3, 2), 11, 4, 0), ((0, 0, 1), 15, 7, 4), ((9, 4, 1), 13, 0, 9)])
def test_eval_uni_examples(coeffs, n, y, expected):
    assert eval_uni(UniPoly.make(coeffs, n), y) == expected


def test_zero_polynomial_normalizes_to_empty():
    assert UniPoly.make([0, 15, 30], 15).coeffs == ()
    assert UniPoly.make([1, 2, 0, 0], 7).degree == 1


@given(st.lists(st.integers(0, 10**6), max_size=6), st.lists(st.integers(0, 10**6), max_size=6),
       st.integers(0, 10**6))
def test_uni_arithmetic_matches_evaluation(a, b, y):
    n = 1000003
    pa, pb = UniPoly.make(a, n), UniPoly.make(b, n)
    assert (pa + pb)(y) == (pa(y) + pb(y)) % n
    assert (pa - pb)(y) == (pa(y) - pb(y)) % n
    assert (pa * pb)(y) == pa(y) * pb(y) % n


# -- bivariate ---------------------------------------------------------------

def test_eval_bi_generic_example():
    P = BiPoly(((0, 1), (1, 0)), M15, Family.GENERIC)  # x + y
    assert eval_bi(P, 4, 5) == 9


def test_eval_bi_homomorphic_example():
    P = BiPoly(((0, 0), (1, 1)), M15, Family.HOMOMORPHIC)  # x * (y + 1)^2
    assert eval_bi(P, 4, 1) == 1


def test_partial_examples():
    P = BiPoly(((0, 0), (0, 1), (3, 0)), M15, Family.GENERIC)  # x*y + 3x^2
    assert partial_x(P, 2).coeffs == (12, 2)
    assert partial_y(P, 5).coeffs == (0, 5, 3)
    assert partial_x(P, 0).coeffs == y_free_part(P).coeffs == ()


@pytest.mark.parametrize("family", list(Family))
def test_substitution_commutes(family):
    rng = random.Random(family.value)
    P = gen_bipoly(family, 3, 4, M_BIG, rng)
    for _ in range(1000):
        x, y = rng.randrange(M_BIG), rng.randrange(M_BIG)
        v = eval_bi(P, x, y)
        assert eval_uni(partial_x(P, x), y) == v
        assert eval_uni(partial_y(P, y), x) == v


@pytest.mark.parametrize("seed", range(5))
def test_generic_matches_direct_expansion(seed):
    rng = random.Random(seed)
    P = gen_bipoly(Family.GENERIC, 4, 3, M_BIG, rng)
    for _ in range(50):
        x, y = rng.randrange(M_BIG), rng.randrange(M_BIG)
        assert eval_bi(P, x, y) == direct_eval(P.coeffs, x, y, M_BIG)


def test_squared_is_square_of_stored_root():
    rng = random.Random(2)
    P = gen_bipoly(Family.SQUARED, 3, 3, M_BIG, rng)
    for _ in range(100):
        x, y = rng.randrange(M_BIG), rng.randrange(M_BIG)
        r = direct_eval(P.coeffs, x, y, M_BIG)
        assert eval_bi(P, x, y) == r * r % M_BIG
        assert eval_uni(inner_partial_y(P, y), x) == r
    # partial_y yields the square of R(., y0)
    y0 = 17
    inner = inner_partial_y(P, y0)
    assert partial_y(P, y0).coeffs == (inner * inner).coeffs


def test_squared_values_are_qr_or_share_a_factor():
    m = Modulus.from_factors([1009, 1013])
    P = gen_bipoly(Family.SQUARED, 3, 3, m.value, random.Random(4))
    rng = random.Random(5)
    for _ in range(500):
        v = eval_bi(P, rng.randrange(m.value), rng.randrange(m.value))
        assert v == 0 or is_qr(v, m) or any(v % p == 0 for p in m.factors)


def test_homomorphic_additive_in_x():
    rng = random.Random(6)
    P = gen_bipoly(Family.HOMOMORPHIC, 3, 3, M_BIG, rng)
    assert all(c == 0 for c in P.coeffs[0])
    for _ in range(100):
        x1, x2, y = (rng.randrange(M_BIG) for _ in range(3))
        assert (eval_bi(P, x1, y) + eval_bi(P, x2, y)) % M_BIG == eval_bi(P, x1 + x2, y)


def test_gen_bipoly_deterministic():
    a = gen_bipoly(Family.GENERIC, 3, 3, M_BIG, random.Random(11))
    b = gen_bipoly(Family.GENERIC, 3, 3, M_BIG, random.Random(11))
    assert a == b


def test_gen_bipoly_rejects_small_degrees():
    with pytest.raises(ParameterError):
        gen_bipoly(Family.GENERIC, 1, 3, M_BIG, random.Random(0))


# -- interpolation ---------------------------------------------------------------

def test_interpolation_examples():
    assert interpolate_free_coeff([SharePoint(1, 5), SharePoint(2, 7)], 11) == 3
    assert interpolate_free_coeff([SharePoint(x, 6) for x in (1, 2, 3)], 11) == 6


def test_interpolation_errors():
    with pytest.raises(ParameterError):
        interpolate_free_coeff([SharePoint(1, 5), SharePoint(1, 7)], 11)
    with pytest.raises(ParameterError):
        interpolate_free_coeff([SharePoint(1, 5), SharePoint(2, 7)], 15)
    with pytest.raises(ParameterError):
        interpolate_free_coeff([SharePoint(1, 5)], 11, w=2)


@pytest.mark.parametrize("seed", range(200))
def test_interpolation_random_quadratics(seed):
    p = 10007
    rng = random.Random(seed)
    f = [rng.randrange(p) for _ in range(3)]
    xs = rng.sample(range(1, p), 3)
    pts = [SharePoint(x, sum(c * x**k for k, c in enumerate(f)) % p) for x in xs]
    assert interpolate_free_coeff(pts, p) == f[0]
    assert solve_free_coeff([(pt.x_coord, pt.value) for pt in pts], p) == f[0]


@pytest.mark.parametrize("w", [2, 3, 5])
def test_any_w_of_w_plus_three_points_recover(w):
    p = 2**61 - 1
    rng = random.Random(w)
    f = [rng.randrange(p) for _ in range(w)]
    pts = [SharePoint(x, sum(c * pow(x, k, p) for k, c in enumerate(f)) % p) for x in rng.sample(range(1, 10**9), w + 3)]
    for subset in itertools.combinations(pts, w):
        assert interpolate_free_coeff(list(subset), p) == f[0]


@pytest.mark.parametrize("w", [2, 3, 4])
def test_fewer_than_w_points_fit_every_candidate(w):
    # w-1 points plus a chosen f(0) always determine a valid degree-(w-1) polynomial
    p = 10007
    rng = random.Random(100 + w)
    f = [rng.randrange(p) for _ in range(w)]
    pts = [(x, sum(c * x**k for k, c in enumerate(f)) % p) for x in rng.sample(range(1, p), w - 1)]
    for v in rng.sample(range(p), 50):
        g = solve_coeffs(pts + [(0, v)], p)
        assert len(g) == w and g[0] == v
        assert all(sum(c * x**k for k, c in enumerate(g)) % p == y for x, y in pts)
