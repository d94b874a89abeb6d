"""Exact rational arithmetic helpers: linear algebra and sparse polynomials."""

from __future__ import annotations

from collections import defaultdict
from fractions import Fraction
from itertools import product
from math import factorial
from typing import Iterable, Mapping, Sequence


def as_fraction(value) -> Fraction:
    """Parse ints, Fractions, "p/q" strings and finite floats (exactly)."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("boolean is not a rational number")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value.strip())
    if isinstance(value, float):
        if value != value or value in (float("inf"), float("-inf")):
            raise ValueError(f"non-finite value {value}")
        return Fraction(value)
    raise TypeError(f"cannot interpret {value!r} as rational")


def fraction_str(q: Fraction) -> str:
    q = Fraction(q)
    return f"{q.numerator}/{q.denominator}"


def det(rows: Sequence[Sequence]) -> Fraction:
    """Determinant by fraction-exact Gaussian elimination."""
    m = [[Fraction(x) for x in row] for row in rows]
    n = len(m)
    sign = 1
    result = Fraction(1)
    for col in range(n):
        pivot = next((r for r in range(col, n) if m[r][col] != 0), None)
        if pivot is None:
            return Fraction(0)
        if pivot != col:
            m[col], m[pivot] = m[pivot], m[col]
            sign = -sign
        p = m[col][col]
        result *= p
        for r in range(col + 1, n):
            f = m[r][col] / p
            if f:
                for c in range(col, n):
                    m[r][c] -= f * m[col][c]
    return sign * result


def solve(rows: Sequence[Sequence], rhs: Sequence) -> list[Fraction] | None:
    """Solve a square system exactly; None when singular."""
    n = len(rows)
    m = [[Fraction(x) for x in row] + [Fraction(b)] for row, b in zip(rows, rhs)]
    for col in range(n):
        pivot = next((r for r in range(col, n) if m[r][col] != 0), None)
        if pivot is None:
            return None
        m[col], m[pivot] = m[pivot], m[col]
        p = m[col][col]
        m[col] = [x / p for x in m[col]]
        for r in range(n):
            if r != col and m[r][col] != 0:
                f = m[r][col]
                m[r] = [a - f * b for a, b in zip(m[r], m[col])]
    return [m[r][n] for r in range(n)]


def rank(vectors: Sequence[Sequence]) -> int:
    m = [[Fraction(x) for x in v] for v in vectors]
    if not m:
        return 0
    rows, cols = len(m), len(m[0])
    r = 0
    for col in range(cols):
        pivot = next((i for i in range(r, rows) if m[i][col] != 0), None)
        if pivot is None:
            continue
        m[r], m[pivot] = m[pivot], m[r]
        for i in range(r + 1, rows):
            f = m[i][col] / m[r][col]
            if f:
                m[i] = [a - f * b for a, b in zip(m[i], m[r])]
        r += 1
        if r == rows:
            break
    return r


def kernel_vector(rows: Sequence[Sequence], n: int) -> list[Fraction] | None:
    """A nonzero vector orthogonal to n-1 independent rows (generalized cross product)."""
    if len(rows) != n - 1:
        raise ValueError("need exactly n-1 rows")
    vec = []
    for i in range(n):
        minor = [[row[j] for j in range(n) if j != i] for row in rows]
        vec.append((-1) ** i * det(minor) if minor else Fraction(1))
    if all(c == 0 for c in vec):
        return None
    return vec


class Poly:
    """Sparse multivariate polynomial with Fraction (or float) coefficients."""

    __slots__ = ("nvars", "terms")

    def __init__(self, nvars: int, terms: Mapping[tuple, object] | None = None):
        self.nvars = nvars
        self.terms = {}
        for exps, c in (terms or {}).items():
            if c != 0:
                self.terms[tuple(exps)] = c

    @classmethod
    def constant(cls, nvars, c):
        return cls(nvars, {(0,) * nvars: c})

    @classmethod
    def variable(cls, nvars, i):
        e = [0] * nvars
        e[i] = 1
        return cls(nvars, {tuple(e): Fraction(1)})

    @classmethod
    def affine(cls, coeffs: Sequence, const=0):
        """const + Σ coeffs[i] x_i."""
        n = len(coeffs)
        p = cls.constant(n, const)
        for i, c in enumerate(coeffs):
            p = p + cls.variable(n, i) * c
        return p

    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=0)

    def _coerce(self, other):
        if isinstance(other, Poly):
            return other
        return Poly.constant(self.nvars, other)

    def __add__(self, other):
        other = self._coerce(other)
        out = dict(self.terms)
        for e, c in other.terms.items():
            out[e] = out.get(e, 0) + c
        return Poly(self.nvars, out)

    __radd__ = __add__

    def __neg__(self):
        return Poly(self.nvars, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, Poly):
            return Poly(self.nvars, {e: c * other for e, c in self.terms.items()})
        out = defaultdict(int)
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                out[tuple(a + b for a, b in zip(e1, e2))] += c1 * c2
        return Poly(self.nvars, out)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        result = Poly.constant(self.nvars, Fraction(1))
        for _ in range(k):
            result = result * self
        return result

    def __call__(self, point):
        total = 0
        for e, c in self.terms.items():
            term = c
            for x, k in zip(point, e):
                if k:
                    term = term * x**k
            total += term
        return total

    def evaluate(self, points):
        """Vectorized float evaluation at an (m, n) array."""
        import numpy as np

        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.zeros(pts.shape[0])
        for e, c in self.terms.items():
            out += float(c) * np.prod(pts ** np.asarray(e), axis=1)
        return out

    def derivative(self, i: int):
        out = {}
        for e, c in self.terms.items():
            if e[i]:
                ne = list(e)
                ne[i] -= 1
                out[tuple(ne)] = c * e[i]
        return Poly(self.nvars, out)

    def compose_affine(self, matrix: Sequence[Sequence], offset: Sequence) -> "Poly":
        """p(M y + b) as a polynomial in y (M is n x m, y has m variables)."""
        m = len(matrix[0]) if matrix else 0
        images = [Poly.affine(list(matrix[i]), offset[i]) for i in range(self.nvars)]
        result = Poly(m)
        cache: dict[tuple[int, int], Poly] = {}
        for e, c in self.terms.items():
            term = Poly.constant(m, c)
            for i, k in enumerate(e):
                if k:
                    if (i, k) not in cache:
                        cache[(i, k)] = images[i] ** k
                    term = term * cache[(i, k)]
            result = result + term
        return result

    def __repr__(self):
        return f"Poly({self.nvars}, {self.terms})"


def simplex_integral(poly: Poly, vertices: Sequence[Sequence], measure) -> Fraction:
    """∫_Δ poly over the simplex with given vertices, scaled so that ∫_Δ 1 = measure.

    Uses barycentric coordinates: ∫ Π b_k^{m_k} = d! |Δ| Π m_k! / (d + Σ m)!.
    """
    d = len(vertices) - 1
    n = poly.nvars
    # x_i = Σ_k b_k v_k[i]
    matrix = [[vertices[k][i] for k in range(d + 1)] for i in range(n)]
    bary = poly.compose_affine(matrix, [0] * n)
    total = Fraction(0)
    for e, c in bary.terms.items():
        num = 1
        for mk in e:
            num *= factorial(mk)
        total += c * Fraction(num * factorial(d), factorial(d + sum(e)))
    return total * measure


def lattice_box(lows: Iterable[int], highs: Iterable[int]):
    return product(*(range(lo, hi + 1) for lo, hi in zip(lows, highs)))
