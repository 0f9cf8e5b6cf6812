"""Univariate and bivariate polynomials over Z_n, plus Lagrange recovery.

Coefficient containers are tuples indexed by degree.  Bivariate
polynomials carry a family tag deciding how the stored matrix is turned
into values:

* ``GENERIC``      P(x, y) = sum c[a][b] x^a y^b
* ``SQUARED``      P(x, y) = R(x, y)^2 with R the stored matrix
* ``HOMOMORPHIC``  P(x, y) = x * A(y)^2 with A stored as row 1
"""
from __future__ import annotations

import enum
import random
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import ParameterError
from .numtheory import is_probable_prime


class Family(str, enum.Enum):
    GENERIC = "generic"
    SQUARED = "squared"
    HOMOMORPHIC = "homomorphic"


def _normalize(coeffs: Iterable[int], modulus: int) -> tuple[int, ...]:
    out = [int(c) % modulus for c in coeffs]
    while out and out[-1] == 0:
        out.pop()
    return tuple(out)


@dataclass(frozen=True)
class UniPoly:
    coeffs: tuple[int, ...]
    modulus: int

    @classmethod
    def make(cls, coeffs: Iterable[int], modulus: int) -> "UniPoly":
        return cls(_normalize(coeffs, modulus), modulus)

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def __call__(self, y: int) -> int:
        return eval_uni(self, y)

    def __add__(self, other: "UniPoly") -> "UniPoly":
        n = max(len(self.coeffs), len(other.coeffs))
        a = self.coeffs + (0,) * (n - len(self.coeffs))
        b = other.coeffs + (0,) * (n - len(other.coeffs))
        return UniPoly.make((x + y for x, y in zip(a, b)), self.modulus)

    def __sub__(self, other: "UniPoly") -> "UniPoly":
        return self + other.scale(-1)

    def __mul__(self, other: "UniPoly") -> "UniPoly":
        if not self.coeffs or not other.coeffs:
            return UniPoly((), self.modulus)
        out = [0] * (len(self.coeffs) + len(other.coeffs) - 1)
        for i, a in enumerate(self.coeffs):
            for j, b in enumerate(other.coeffs):
                out[i + j] += a * b
        return UniPoly.make(out, self.modulus)

    def scale(self, k: int) -> "UniPoly":
        return UniPoly.make((k * c for c in self.coeffs), self.modulus)

    def padded(self, length: int) -> tuple[int, ...]:
        """Coefficients right-padded with zeros to ``length`` entries."""
        if len(self.coeffs) > length:
            raise ParameterError("polynomial longer than requested padding")
        return self.coeffs + (0,) * (length - len(self.coeffs))


@dataclass(frozen=True)
class BiPoly:
    coeffs: tuple[tuple[int, ...], ...]  # coeffs[a][b] multiplies x^a y^b
    modulus: int
    family: Family = Family.GENERIC

    @property
    def x_terms(self) -> int:
        return len(self.coeffs)

    @property
    def y_terms(self) -> int:
        return max((len(row) for row in self.coeffs), default=0)

    def rows(self) -> list[UniPoly]:
        return [UniPoly.make(row, self.modulus) for row in self.coeffs]

    def columns(self) -> list[UniPoly]:
        q = self.y_terms
        return [UniPoly.make((row[b] if b < len(row) else 0 for row in self.coeffs), self.modulus)
                for b in range(q)]


@dataclass(frozen=True)
class SharePoint:
    x_coord: int
    value: int


def eval_uni(p: UniPoly, y: int) -> int:
    acc = 0
    for c in reversed(p.coeffs):
        acc = (acc * y + c) % p.modulus
    return acc


def _eval_matrix(coeffs, modulus, x, y):
    acc = 0
    for row in reversed(coeffs):
        inner = 0
        for c in reversed(row):
            inner = (inner * y + c) % modulus
        acc = (acc * x + inner) % modulus
    return acc


def eval_bi(P: BiPoly, x: int, y: int) -> int:
    n = P.modulus
    if P.family is Family.HOMOMORPHIC:
        a = eval_uni(P.rows()[1], y)
        return x * a * a % n
    v = _eval_matrix(P.coeffs, n, x, y)
    if P.family is Family.SQUARED:
        return v * v % n
    return v


def _substitute(polys: Sequence[UniPoly], z: int, modulus: int) -> UniPoly:
    # sum polys[k] * z^k as a polynomial in the other variable
    acc = UniPoly((), modulus)
    zk = 1
    for poly in polys:
        acc = acc + poly.scale(zk)
        zk = zk * z % modulus
    return acc


def partial_x(P: BiPoly, x0: int) -> UniPoly:
    """Fix x = x0; result is a polynomial in y."""
    n = P.modulus
    if P.family is Family.HOMOMORPHIC:
        a = P.rows()[1]
        return (a * a).scale(x0)
    r = _substitute(P.rows(), x0, n)
    return r * r if P.family is Family.SQUARED else r


def partial_y(P: BiPoly, y0: int) -> UniPoly:
    """Fix y = y0; result is a polynomial in x."""
    n = P.modulus
    if P.family is Family.HOMOMORPHIC:
        a = eval_uni(P.rows()[1], y0)
        return UniPoly.make((0, a * a), n)
    r = _substitute(P.columns(), y0, n)
    return r * r if P.family is Family.SQUARED else r


def inner_partial_x(P: BiPoly, x0: int) -> UniPoly:
    """R(x0, .) for the SQUARED family (the polynomial that gets squared)."""
    return _substitute(P.rows(), x0, P.modulus)


def inner_partial_y(P: BiPoly, y0: int) -> UniPoly:
    return _substitute(P.columns(), y0, P.modulus)


def y_free_part(P: BiPoly) -> UniPoly:
    """The x-free row of a GENERIC polynomial (the 'only y' terms)."""
    if P.family is not Family.GENERIC:
        return UniPoly((), P.modulus)
    return P.rows()[0]


def lagrange_weights_at_zero(xs: Sequence[int], prime: int) -> list[int]:
    weights = []
    for i, xi in enumerate(xs):
        num, den = 1, 1
        for j, xj in enumerate(xs):
            if i != j:
                num = num * xj % prime
                den = den * (xj - xi) % prime
        weights.append(num * pow(den, -1, prime) % prime)
    return weights


def interpolate_free_coeff(points: Sequence[SharePoint], prime_modulus: int, w: int | None = None) -> int:
    """Value at x = 0 of the polynomial through the first ``w`` points.

    With ``w`` omitted every supplied point is used.
    """
    if not is_probable_prime(prime_modulus) or prime_modulus == 2:
        raise ParameterError("interpolation needs an odd prime modulus")
    pts = list(points if w is None else points[:w])
    if w is not None and len(pts) < w:
        raise ParameterError(f"need {w} points, got {len(pts)}")
    xs = [pt.x_coord % prime_modulus for pt in pts]
    if len(set(xs)) != len(xs):
        raise ParameterError("duplicate x coordinates")
    weights = lagrange_weights_at_zero(xs, prime_modulus)
    return sum(wt * pt.value for wt, pt in zip(weights, pts)) % prime_modulus


def gen_bipoly(family: Family, d: int, q: int, modulus: int, rng: random.Random) -> BiPoly:
    """Random polynomial of x-degree d-1 and y-degree q-1 for ``family``.

    SQUARED stores the root R and HOMOMORPHIC stores A in row 1, so the
    evaluated degrees are doubled where the square applies.
    """
    if d < 2 or q < 2:
        raise ParameterError("d and q must both be at least 2")
    family = Family(family)

    def row():
        r = [rng.randrange(modulus) for _ in range(q)]
        if r[-1] == 0:
            r[-1] = 1
        return tuple(r)

    if family is Family.HOMOMORPHIC:
        return BiPoly(((0,) * q, row()), modulus, family)
    rows = [row() for _ in range(d)]
    return BiPoly(tuple(rows), modulus, family)
