import itertools
import math
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from v2vauth.errors import CapabilityError, ParameterError
from v2vauth.numtheory import (
    Modulus,
    crt_combine,
    enc_m,
    enumerate_qr,
    gen_prime,
    is_probable_prime,
    is_qr,
    jacobi,
    legendre,
    poly_roots_mod_composite,
    poly_roots_mod_prime,
    sqrt_mod_prime,
)


# -- brute-force oracles ------------------------------------------------------

def trial_division_prime(n):
    if n < 2:
        return False
    return all(n % k for k in range(2, math.isqrt(n) + 1))


def squares_mod(p):
    return {x * x % p for x in range(1, p)}


def scan_roots(coeffs, m):
    return sorted(x for x in range(m) if sum(c * pow(x, k, m) for k, c in enumerate(coeffs)) % m == 0)


def scan_qr(m):
    units = [x for x in range(1, m) if math.gcd(x, m) == 1]
    return sorted({x * x % m for x in units})


SMALL_PRIMES = [p for p in range(3, 400) if trial_division_prime(p)]
# distinct odd-prime products up to 10^5 used as composite test moduli
COMPOSITES = [(3, 5), (3, 7), (5, 7, 11), (7, 11, 13), (3, 5, 7, 11), (11, 13, 17), (17, 19, 23), (3, 31, 1009)]


# -- primes -------------------------------------------------------------------

def test_gen_prime_three_bits():
    for seed in range(20):
        assert gen_prime(3, random.Random(seed)) in (5, 7)


def test_gen_prime_deterministic():
    assert gen_prime(4, random.Random(9)) == gen_prime(4, random.Random(9))


@pytest.mark.parametrize("seed", range(10))
def test_gen_prime_ten_bits(seed):
    p = gen_prime(10, random.Random(seed))
    assert 512 <= p < 1024 and trial_division_prime(p)


def test_gen_prime_residue_class():
    p = gen_prime(20, random.Random(1), residue=(1, 8))
    assert p % 8 == 1 and p.bit_length() == 20


@pytest.mark.parametrize("start", range(0, 6000, 1000))
def test_miller_rabin_matches_trial_division(start):
    for n in range(start, start + 1000):
        assert is_probable_prime(n) == trial_division_prime(n), n


def test_carmichael_numbers_rejected():
    for n in (561, 1105, 1729, 2465, 2821, 6601, 8911, 41041, 825265):
        assert not is_probable_prime(n)


# -- Modulus --------------------------------------------------------------------

def test_modulus_validation():
    assert Modulus.from_factors([3, 5]).value == 15
    with pytest.raises(ParameterError):
        Modulus(15, (3, 3))
    with pytest.raises(ParameterError):
        Modulus(14, (2, 7))
    with pytest.raises(ParameterError):
        Modulus(15, (15,))
    with pytest.raises(ParameterError):
        Modulus(16, (3, 5))


# -- Legendre / Jacobi ----------------------------------------------------------

@pytest.mark.parametrize("x,p,expected", [(4, 7, 1), (0, 7, 0), (3, 7, -1)])
def test_legendre_examples(x, p, expected):
    assert legendre(x, p) == expected


@pytest.mark.parametrize("p", [2, 1, 0, -7, 8])
def test_legendre_rejects_bad_modulus(p):
    with pytest.raises(ParameterError):
        legendre(3, p)


@pytest.mark.parametrize("p", SMALL_PRIMES)
def test_legendre_matches_square_enumeration(p):
    sq = squares_mod(p)
    for x in range(p):
        expected = 0 if x == 0 else (1 if x in sq else -1)
        assert legendre(x, p) == expected


@pytest.mark.parametrize("p", [p for p in SMALL_PRIMES if p < 200] + [65521, 65519])
def test_residue_count_over_units(p):
    assert sum(legendre(x, p) == 1 for x in range(1, p)) == (p - 1) // 2


@given(st.integers(-10**30, 10**30), st.sampled_from(SMALL_PRIMES))
def test_legendre_periodic(x, p):
    assert legendre(x, p) == legendre(x % p, p)


@pytest.mark.parametrize("x,expected", [(2, 1), (4, 1), (5, 0)])
def test_jacobi_examples(x, expected):
    assert jacobi(x, Modulus.from_factors([3, 5])) == expected


@pytest.mark.parametrize("x,expected", [(4, True), (2, False), (10, False)])
def test_is_qr_examples(x, expected):
    assert is_qr(x, Modulus.from_factors([3, 5])) is expected


def test_jacobi_plus_one_does_not_imply_qr():
    m = Modulus.from_factors([3, 5])
    assert jacobi(2, m) == 1 and not is_qr(2, m)


@pytest.mark.parametrize("factors", COMPOSITES)
def test_qr_implies_jacobi_one(factors):
    m = Modulus.from_factors(factors)
    for x in enumerate_qr(m):
        assert jacobi(x, m) == 1


# -- square roots and CRT ---------------------------------------------------------

@pytest.mark.parametrize("x,p,expected", [(2, 7, (3, 4)), (0, 7, (0,)), (3, 7, None)])
def test_sqrt_examples(x, p, expected):
    assert sqrt_mod_prime(x, p) == expected


@pytest.mark.parametrize("p", SMALL_PRIMES + [65537, 1000003, 2**61 - 1])
def test_sqrt_squares_back(p):
    rng = random.Random(p)
    for _ in range(50):
        x = rng.randrange(1, p)
        roots = sqrt_mod_prime(x, p)
        if legendre(x, p) == 1:
            assert len(roots) == 2 and all(r * r % p == x for r in roots) and sum(roots) == p
        else:
            assert roots is None


@pytest.mark.parametrize("residues,expected", [([(2, 3), (3, 5)], 8), ([(0, 3), (0, 5)], 0),
                                               ([(1, 3), (1, 5), (1, 7)], 1)])
def test_crt_examples(residues, expected):
    assert crt_combine(residues) == expected


def test_crt_rejects_shared_factor():
    with pytest.raises(ParameterError):
        crt_combine([(1, 6), (2, 9)])


@given(st.integers(0, 3 * 5 * 7 * 11 * 13 - 1))
def test_crt_inverts_reduction(x):
    ps = [3, 5, 7, 11, 13]
    assert crt_combine([(x % p, p) for p in ps]) == x


# -- QR enumeration -----------------------------------------------------------------

@pytest.mark.parametrize("factors,expected", [((3, 5), [1, 4]), ((3, 7), [1, 4, 16])])
def test_enumerate_qr_examples(factors, expected):
    assert list(enumerate_qr(Modulus.from_factors(factors))) == expected


@pytest.mark.parametrize("factors", COMPOSITES)
def test_enumerate_qr_matches_scan(factors):
    m = Modulus.from_factors(factors)
    assert list(enumerate_qr(m)) == scan_qr(m.value)


def test_enumerate_qr_bound():
    m = Modulus.from_factors([3, 5, 7, 11, 13, 17, 19, 23])
    with pytest.raises(CapabilityError):
        enumerate_qr(m, bound=10**6)


@pytest.mark.parametrize("factors", COMPOSITES[:5])
def test_qr_subgroup_closed(factors):
    m = Modulus.from_factors(factors)
    qrs = set(enumerate_qr(m))
    for a, b in itertools.product(sorted(qrs)[:30], repeat=2):
        assert a * b % m.value in qrs


# -- root finding ---------------------------------------------------------------

@pytest.mark.parametrize("coeffs,p,expected", [([-1, 0, 1], 7, [1, 6]), ([1, 0, 1], 7, []), ([3, 2], 5, [1])])
def test_roots_mod_prime_examples(coeffs, p, expected):
    assert sorted(poly_roots_mod_prime(coeffs, p)) == expected


def test_zero_polynomial_rejected():
    with pytest.raises(ParameterError):
        poly_roots_mod_prime([0, 7, 14], 7)


@pytest.mark.parametrize("p", [p for p in SMALL_PRIMES if p < 120])
def test_roots_mod_prime_match_scan(p):
    rng = random.Random(p)
    for deg in range(1, 6):
        coeffs = [rng.randrange(p) for _ in range(deg)] + [rng.randrange(1, p)]
        assert sorted(poly_roots_mod_prime(coeffs, p)) == scan_roots(coeffs, p)


@pytest.mark.parametrize("seed", range(8))
def test_splitting_path_matches_scan_path(seed):
    # force equal-degree splitting on a prime small enough to scan
    rng = random.Random(seed)
    p = 10007
    roots = rng.sample(range(p), 3)
    coeffs = [1]
    for r in roots:
        coeffs = [(a - r * b) % p for a, b in zip([0] + coeffs, coeffs + [0])]
    coeffs = [(c + (rng.randrange(p) if k == 0 and seed % 2 else 0)) % p for k, c in enumerate(coeffs)]
    fast = sorted(poly_roots_mod_prime(coeffs, p, brute_force_bound=0, rng=random.Random(seed)))
    assert fast == scan_roots(coeffs, p)


def test_splitting_large_prime():
    p = gen_prime(61, random.Random(3))
    roots = [12345, 999999937, p - 5]
    coeffs = [1]
    for r in roots:
        coeffs = [(a - r * b) % p for a, b in zip([0] + coeffs, coeffs + [0])]
    assert sorted(poly_roots_mod_prime(coeffs, p)) == sorted(roots)


@pytest.mark.parametrize("coeffs,factors,expected", [([-4, 0, 1], (3, 5), [2, 7, 8, 13]),
                                                     ([-3, 1], (3, 5), [3]),
                                                     ([1, 0, 1], (3, 5), [])])
def test_roots_mod_composite_examples(coeffs, factors, expected):
    assert poly_roots_mod_composite(coeffs, Modulus.from_factors(factors)) == expected


@pytest.mark.parametrize("factors", COMPOSITES)
def test_roots_mod_composite_match_scan(factors):
    m = Modulus.from_factors(factors)
    rng = random.Random(m.value)
    for deg in (1, 2, 3):
        for _ in range(3):
            coeffs = [rng.randrange(m.value) for _ in range(deg + 1)]
            if any(all(c % p == 0 for c in coeffs[1:]) for p in factors):
                continue
            assert poly_roots_mod_composite(coeffs, m) == scan_roots(coeffs, m.value)


def test_enc_m_width():
    assert enc_m(1, 2**16 + 1) == b"\x00\x00\x01"
    assert len(enc_m(0, 255)) == 1
