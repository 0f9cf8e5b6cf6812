"""Modular arithmetic and quadratic-residuosity helpers.

Everything here works on plain Python integers (arbitrary precision).  The
only stateful object is the ``random.Random`` instance a caller passes in.
"""
from __future__ import annotations

import functools
import itertools
import math
import random
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import CapabilityError, ParameterError

MR_ROUNDS = 64
QR_ENUMERATION_BOUND = 2**24
BRUTE_FORCE_BOUND = 2**20
ROOT_PRODUCT_CAP = 2**16

_SMALL_PRIMES = (3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97)


def is_probable_prime(n: int, rounds: int = MR_ROUNDS, rng: random.Random | None = None) -> bool:
    """Miller-Rabin with ``rounds`` random bases (error below 4**-rounds).

    Without an explicit ``rng`` the bases are drawn from a generator seeded
    with ``n`` so the answer is reproducible.
    """
    if n < 2:
        return False
    if n in (2, 3):
        return True
    if n % 2 == 0:
        return False
    for p in _SMALL_PRIMES:
        if n == p:
            return True
        if n % p == 0:
            return False
    if rng is None:
        rng = random.Random(n)
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for _ in range(rounds):
        a = rng.randrange(2, n - 1)
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def gen_prime(bits: int, rng: random.Random, residue: tuple[int, int] | None = None) -> int:
    """Return an odd prime of exactly ``bits`` bits drawn from ``rng``.

    ``residue=(a, k)`` additionally requires ``p % k == a``.
    """
    if bits < 3:
        raise ParameterError("gen_prime needs bits >= 3")
    top = 1 << (bits - 1)
    while True:
        cand = rng.getrandbits(bits) | top | 1
        if residue is not None:
            a, k = residue
            cand = cand - (cand % k) + a
            if cand.bit_length() != bits or cand % 2 == 0:
                continue
        if is_probable_prime(cand, rng=rng):
            return cand


@dataclass(frozen=True)
class Modulus:
    """A composite ``value`` together with its distinct odd prime ``factors``."""

    value: int
    factors: tuple[int, ...]

    def __post_init__(self):
        if len(set(self.factors)) != len(self.factors):
            raise ParameterError("modulus factors must be pairwise distinct")
        if math.prod(self.factors) != self.value:
            raise ParameterError("product of factors does not match modulus value")
        for p in self.factors:
            if p % 2 == 0 or not is_probable_prime(p):
                raise ParameterError(f"factor {p} is not an odd prime")

    @classmethod
    def from_factors(cls, factors: Iterable[int]) -> "Modulus":
        factors = tuple(int(p) for p in factors)
        return cls(math.prod(factors), factors)

    @property
    def nbytes(self) -> int:
        return (self.value.bit_length() + 7) // 8

    def __int__(self):
        return self.value


def _check_odd_prime(p: int):
    if p < 3 or p % 2 == 0:
        raise ParameterError(f"{p} is not an odd prime")


def legendre(x: int, p: int) -> int:
    """Legendre symbol via Euler's criterion, returned as -1, 0 or +1."""
    _check_odd_prime(p)
    r = pow(x % p, (p - 1) // 2, p)
    if r == 0:
        return 0
    return 1 if r == 1 else -1


def jacobi(x: int, m: Modulus) -> int:
    """Product of the Legendre symbols of ``x`` over the factors of ``m``."""
    acc = 1
    for p in m.factors:
        acc *= legendre(x, p)
        if acc == 0:
            return 0
    return acc


def is_qr(x: int, m: Modulus) -> bool:
    # Zero symbols (x not coprime to M) make this False.
    return all(legendre(x, p) == 1 for p in m.factors)


def sqrt_mod_prime(x: int, p: int) -> tuple[int, ...] | None:
    """Square roots of ``x`` modulo the odd prime ``p`` (Tonelli-Shanks).

    Returns ``(r, p - r)`` with ``r < p - r`` for a residue, ``(0,)`` for
    ``x = 0 mod p`` and ``None`` for a non-residue.
    """
    _check_odd_prime(p)
    x %= p
    if x == 0:
        return (0,)
    if pow(x, (p - 1) // 2, p) != 1:
        return None
    q, s = p - 1, 0
    while q % 2 == 0:
        q //= 2
        s += 1
    if s == 1:
        r = pow(x, (p + 1) // 4, p)
    else:
        z = 2
        while pow(z, (p - 1) // 2, p) != p - 1:
            z += 1
        m, c, t, r = s, pow(z, q, p), pow(x, q, p), pow(x, (q + 1) // 2, p)
        while t != 1:
            i, t2 = 0, t
            while t2 != 1:
                t2 = t2 * t2 % p
                i += 1
            b = pow(c, 1 << (m - i - 1), p)
            m, c = i, b * b % p
            t, r = t * c % p, r * b % p
    return tuple(sorted((r, p - r)))


def crt_combine(residues: Sequence[tuple[int, int]]) -> int:
    """Unique ``x`` in ``[0, prod p_i)`` with ``x = r_i (mod p_i)``."""
    x, n = 0, 1
    for r, p in residues:
        if math.gcd(n, p) != 1:
            raise ParameterError("CRT moduli must be pairwise coprime")
        # x + n*k = r (mod p)
        k = (r - x) * pow(n, -1, p) % p
        x += n * k
        n *= p
    return x % n


def crt_basis(factors: Sequence[int]) -> list[int]:
    """Idempotents e_i with e_i = 1 mod p_i and 0 mod the other factors."""
    n = math.prod(factors)
    out = []
    for p in factors:
        rest = n // p
        out.append(rest * pow(rest, -1, p) % n)
    return out


@functools.lru_cache(maxsize=16)
def _qr_table(m: Modulus) -> tuple[int, ...]:
    basis = crt_basis(m.factors)
    dtype = object if m.value >= 2**31 else np.int64
    acc = np.zeros(1, dtype=dtype)
    for p, e in zip(m.factors, basis):
        squares = np.unique((np.arange(1, p, dtype=np.int64) ** 2) % p).astype(dtype)
        acc = (acc[:, None] + (squares * e)[None, :]).ravel() % m.value
    return tuple(int(v) for v in np.sort(acc))


def enumerate_qr(m: Modulus, bound: int = QR_ENUMERATION_BOUND) -> tuple[int, ...]:
    """All quadratic residues of Z*_M in ascending order.

    Only feasible for small moduli; above ``bound`` a CapabilityError tells
    the caller to switch to the scalable temporary-id mode.
    """
    if m.value > bound:
        raise CapabilityError(f"modulus {m.value} exceeds QR enumeration bound {bound}")
    return _qr_table(m)


# -- polynomial root finding -------------------------------------------------
# Polynomials are coefficient lists, index = degree.

def _trim(f: list[int]) -> list[int]:
    while f and f[-1] == 0:
        f.pop()
    return f


def _pmod(a: list[int], f: list[int], p: int) -> list[int]:
    a = _trim([c % p for c in a])
    df = len(f) - 1
    inv = pow(f[-1], -1, p)
    while len(a) - 1 >= df and a:
        coef = a[-1] * inv % p
        shift = len(a) - 1 - df
        for i, fc in enumerate(f):
            a[shift + i] = (a[shift + i] - coef * fc) % p
        _trim(a)
    return a


def _pmul(a: list[int], b: list[int], p: int) -> list[int]:
    if not a or not b:
        return []
    out = [0] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        if x:
            for j, y in enumerate(b):
                out[i + j] = (out[i + j] + x * y) % p
    return out


def _ppowmod(base: list[int], e: int, f: list[int], p: int) -> list[int]:
    result = [1]
    base = _pmod(base, f, p)
    while e:
        if e & 1:
            result = _pmod(_pmul(result, base, p), f, p)
        base = _pmod(_pmul(base, base, p), f, p)
        e >>= 1
    return result


def _pgcd(a: list[int], b: list[int], p: int) -> list[int]:
    a = _trim([c % p for c in a])
    b = _trim([c % p for c in b])
    while b:
        a, b = b, _pmod(a, b, p)
    if not a:
        return a
    inv = pow(a[-1], -1, p)
    return [c * inv % p for c in a]


def _pdiv(a: list[int], f: list[int], p: int) -> list[int]:
    a = _trim([c % p for c in a])
    df = len(f) - 1
    inv = pow(f[-1], -1, p)
    q = [0] * max(len(a) - df, 0)
    while a and len(a) - 1 >= df:
        coef = a[-1] * inv % p
        shift = len(a) - 1 - df
        q[shift] = coef
        for i, fc in enumerate(f):
            a[shift + i] = (a[shift + i] - coef * fc) % p
        _trim(a)
    return q


def _edf_split(g: list[int], p: int, rng: random.Random) -> list[int]:
    """Roots of a monic product of distinct linear factors."""
    if len(g) == 1:
        return []
    if len(g) == 2:
        return [(-g[0]) % p]
    while True:
        a = rng.randrange(p)
        h = _ppowmod([a, 1], (p - 1) // 2, g, p)
        if not h:
            h = [0]
        h[0] = (h[0] - 1) % p
        d = _pgcd(g, h, p)
        if 1 < len(d) < len(g):
            return _edf_split(d, p, rng) + _edf_split(_pdiv(g, d, p), p, rng)


def _roots_scan(f: list[int], p: int) -> list[int]:
    xs = np.arange(p, dtype=np.int64)
    acc = np.zeros(p, dtype=np.int64)
    for c in reversed(f):
        acc = (acc * xs + c) % p
    return [int(v) for v in np.nonzero(acc == 0)[0]]


def poly_roots_mod_prime(coeffs: Sequence[int], p: int, brute_force_bound: int = BRUTE_FORCE_BOUND,
                         rng: random.Random | None = None) -> list[int]:
    """Distinct roots in Z_p of ``sum(coeffs[k] * x**k)``, ascending.

    Small primes are scanned exhaustively; larger ones go through
    gcd(f, x^p - x) followed by equal-degree splitting.
    """
    _check_odd_prime(p)
    f = _trim([int(c) % p for c in coeffs])
    if not f:
        raise ParameterError("zero polynomial has every element as a root")
    if len(f) == 1:
        return []
    if p < brute_force_bound:
        return _roots_scan(f, p)
    if rng is None:
        rng = random.Random(p ^ len(f))
    inv = pow(f[-1], -1, p)
    f = [c * inv % p for c in f]
    xp = _ppowmod([0, 1], p, f, p)
    xp = xp + [0] * (2 - len(xp))
    xp[1] = (xp[1] - 1) % p
    g = _pgcd(f, xp, p)
    if not g:
        # f divides x^p - x
        g = f
    return sorted(_edf_split(g, p, rng))


def poly_roots_mod_composite(coeffs: Sequence[int], m: Modulus, cap: int = ROOT_PRODUCT_CAP,
                             keep: Callable[[int, int], bool] | None = None) -> list[int]:
    """Roots modulo M assembled by CRT from the per-prime root sets.

    ``keep(root, p)`` optionally filters each per-prime set before the
    cartesian product is formed.
    """
    per_prime = []
    for p in m.factors:
        roots = poly_roots_mod_prime(coeffs, p)
        if keep is not None:
            roots = [r for r in roots if keep(r, p)]
        if not roots:
            return []
        per_prime.append(roots)
    return crt_product(per_prime, m.factors, cap)


def crt_product(per_prime: Sequence[Sequence[int]], factors: Sequence[int], cap: int = ROOT_PRODUCT_CAP) -> list[int]:
    """Every CRT combination of one residue per prime, ascending."""
    total = math.prod(len(r) for r in per_prime)
    if total > cap:
        raise CapabilityError(f"{total} CRT combinations exceed cap {cap}")
    n = math.prod(factors)
    basis = crt_basis(factors)
    out = [sum(r * e for r, e in zip(combo, basis)) % n for combo in itertools.product(*per_prime)]
    return sorted(out)


def enc_int(x: int, nbytes: int) -> bytes:
    return int(x).to_bytes(nbytes, "big")


def enc_m(x: int, m: int | Modulus) -> bytes:
    """Big-endian encoding zero-padded to the byte width of the modulus."""
    value = m.value if isinstance(m, Modulus) else m
    return enc_int(x, (value.bit_length() + 7) // 8)
