"""Smooth functions on R^n with analytic derivatives up to order 4.

Every class exposes ``derivatives(X, order)`` returning a list
[f, Df, D²f, ...] with shapes (N,), (N,n), (N,n,n), ... for points X of
shape (N, n). Corrections of symplectic potentials and test functions of the
weighted forms share this interface.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import permutations, product
from typing import Sequence

import numpy as np
from numpy.polynomial import chebyshev as C

from .rational import Poly


class SmoothFunction:
    dim: int

    def derivatives(self, X: np.ndarray, order: int) -> list[np.ndarray]:
        raise NotImplementedError

    def __call__(self, X):
        return self.derivatives(np.atleast_2d(np.asarray(X, dtype=float)), 0)[0]

    def __add__(self, other: "SmoothFunction") -> "SumFunction":
        return SumFunction((self, other))

    def scaled(self, factor: float) -> "ScaledFunction":
        return ScaledFunction(self, factor)


def _zero_stack(N: int, n: int, order: int) -> list[np.ndarray]:
    return [np.zeros((N,) + (n,) * k) for k in range(order + 1)]


@dataclass(frozen=True)
class ZeroFunction(SmoothFunction):
    dim: int

    def derivatives(self, X, order):
        return _zero_stack(len(X), self.dim, order)


@dataclass(frozen=True)
class SumFunction(SmoothFunction):
    terms: tuple

    @property
    def dim(self):
        return self.terms[0].dim

    def derivatives(self, X, order):
        out = _zero_stack(len(X), self.dim, order)
        for t in self.terms:
            for acc, d in zip(out, t.derivatives(X, order)):
                acc += d
        return out


@dataclass(frozen=True)
class ScaledFunction(SmoothFunction):
    base: SmoothFunction
    factor: float

    @property
    def dim(self):
        return self.base.dim

    def derivatives(self, X, order):
        return [self.factor * d for d in self.base.derivatives(X, order)]


def _multi_indices(n: int, k: int):
    """Index tuples (i1..ik) in nondecreasing order with their count vectors."""
    for idx in product(range(n), repeat=k):
        if list(idx) == sorted(idx):
            yield idx, tuple(idx.count(i) for i in range(n))


def _fill_symmetric(N: int, n: int, k: int, component) -> np.ndarray:
    """Assemble a symmetric k-tensor from a function of the count vector."""
    out = np.empty((N,) + (n,) * k)
    for idx, counts in _multi_indices(n, k):
        vals = component(counts)
        for perm in set(permutations(idx)):
            out[(slice(None),) + perm] = vals
    return out


@dataclass(frozen=True)
class PolynomialFunction(SmoothFunction):
    """A polynomial in monomial form (float evaluation of a Poly)."""

    poly: Poly
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False, hash=False)

    @property
    def dim(self):
        return self.poly.nvars

    def _derived(self, counts):
        """Exponent matrix and float coefficients of a partial derivative."""
        hit = self._cache.get(counts)
        if hit is None:
            p = self.poly
            for i, k in enumerate(counts):
                for _ in range(k):
                    p = p.derivative(i)
            items = [(e, float(c)) for e, c in p.terms.items() if c != 0]
            E = np.array([e for e, _ in items], dtype=int).reshape(len(items), self.dim)
            hit = (E, np.array([c for _, c in items]))
            self._cache[counts] = hit
        return hit

    def _eval(self, counts, powers):
        E, c = self._derived(counts)
        if len(c) == 0:
            return np.zeros(powers.shape[1])
        M = np.ones((powers.shape[1], len(c)))
        for i in range(self.dim):
            M *= powers[E[:, i], :, i].T
        return M @ c

    def derivatives(self, X, order):
        X = np.atleast_2d(X)
        n = self.dim
        deg = max(self.poly.degree(), 0)
        powers = np.empty((deg + 1,) + X.shape)                           # (deg+1, N, n)
        powers[0] = 1.0
        for p in range(1, deg + 1):
            powers[p] = powers[p - 1] * X
        out = [self._eval((0,) * n, powers)]
        for k in range(1, order + 1):
            out.append(_fill_symmetric(len(X), n, k, lambda cnt: self._eval(cnt, powers)))
        return out


def monomial(exponents: Sequence[int], coefficient=1.0) -> PolynomialFunction:
    return PolynomialFunction(Poly(len(exponents), {tuple(exponents): coefficient}))


def monomials_up_to(n: int, degree: int, min_degree: int = 0) -> list[PolynomialFunction]:
    out = []
    for d in range(min_degree, degree + 1):
        for e in product(range(d + 1), repeat=n):
            if sum(e) == d:
                out.append(monomial(e))
    return out


@dataclass(frozen=True)
class GaussianBump(SmoothFunction):
    """amplitude · exp(−|x − center|² / (2 width²))."""

    center: tuple
    width: float
    amplitude: float = 1.0

    @property
    def dim(self):
        return len(self.center)

    def derivatives(self, X, order):
        n = self.dim
        d = X - np.asarray(self.center)
        s2 = self.width ** 2
        g = self.amplitude * np.exp(-np.sum(d * d, axis=1) / (2 * s2))
        q1 = -d / s2                      # gradient of the exponent
        q2 = -np.eye(n) / s2              # its constant Hessian
        out = [g]
        if order >= 1:
            out.append(g[:, None] * q1)
        if order >= 2:
            out.append(g[:, None, None] * (q1[:, :, None] * q1[:, None, :] + q2))
        if order >= 3:
            t = np.einsum("ni,nj,nk->nijk", q1, q1, q1)
            t += (np.einsum("ni,jk->nijk", q1, q2) + np.einsum("nj,ik->nijk", q1, q2)
                  + np.einsum("nk,ij->nijk", q1, q2))
            out.append(g[:, None, None, None] * t)
        if order >= 4:
            t = np.einsum("ni,nj,nk,nl->nijkl", q1, q1, q1, q1)
            pairs = [("ij", "kl"), ("ik", "jl"), ("il", "jk"), ("kl", "ij"), ("jl", "ik"), ("jk", "il")]
            for a, b in pairs:
                t += np.einsum(f"n{a[0]},n{a[1]},{b}->nijkl", q1, q1, q2)
            t += (np.einsum("ij,kl->ijkl", q2, q2) + np.einsum("ik,jl->ijkl", q2, q2)
                  + np.einsum("il,jk->ijkl", q2, q2))[None]
            out.append(g[:, None, None, None, None] * t)
        return out


@dataclass(frozen=True)
class AffineFunction(SmoothFunction):
    constant: float
    gradient: tuple

    @property
    def dim(self):
        return len(self.gradient)

    def derivatives(self, X, order):
        out = _zero_stack(len(X), self.dim, order)
        g = np.asarray(self.gradient, dtype=float)
        out[0] = self.constant + X @ g
        if order >= 1:
            out[1][:] = g
        return out


@dataclass
class ChebyshevBasis:
    """Tensor Chebyshev polynomials of bounded total degree on a box.

    ``exclude`` removes total degrees (e.g. {1} drops the linear terms).
    """

    lower: np.ndarray
    upper: np.ndarray
    degree: int
    min_degree: int = 0
    exclude: tuple = ()
    indices: list = field(init=False)

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        n = len(self.lower)
        self.indices = [e for d in range(self.min_degree, self.degree + 1) if d not in self.exclude
                        for e in product(range(d + 1), repeat=n) if sum(e) == d]
        deg = self.degree
        # coefficient maps for 1D derivatives T_a^{(p)}
        self._dmats = []
        eye = np.eye(deg + 1)
        for p in range(5):
            m = np.zeros((deg + 1, deg + 1))
            for a in range(deg + 1):
                c = C.chebder(eye[a], p) if p else eye[a]
                m[: len(c), a] = c
            self._dmats.append(m)

    @property
    def dim(self):
        return len(self.lower)

    def __len__(self):
        return len(self.indices)

    def _tables(self, X, order):
        half = (self.upper - self.lower) / 2
        Y = (X - (self.upper + self.lower) / 2) / half
        tabs = []
        for i in range(self.dim):
            V = C.chebvander(Y[:, i], self.degree)
            tabs.append([V @ self._dmats[p] / half[i] ** p for p in range(order + 1)])
        return tabs

    def component(self, tabs, counts) -> np.ndarray:
        """Matrix (N, m) of the derivative with the given per-axis counts."""
        idx = np.array(self.indices)
        M = np.ones((tabs[0][0].shape[0], len(self.indices)))
        for i, p in enumerate(counts):
            M *= tabs[i][p][:, idx[:, i]]
        return M

    def design(self, X, order: int) -> dict:
        """Basis derivative matrices keyed by count vectors up to the given order."""
        X = np.atleast_2d(X)
        tabs = self._tables(X, order)
        out = {}
        for k in range(order + 1):
            for _, counts in _multi_indices(self.dim, k):
                out[counts] = self.component(tabs, counts)
        return out

    def function(self, coefficients) -> "ChebyshevFunction":
        return ChebyshevFunction(self, np.asarray(coefficients, dtype=float))


@dataclass(frozen=True)
class ChebyshevFunction(SmoothFunction):
    basis: ChebyshevBasis
    coefficients: np.ndarray

    @property
    def dim(self):
        return self.basis.dim

    def derivatives(self, X, order):
        tabs = self.basis._tables(X, order)
        c = self.coefficients
        out = [self.basis.component(tabs, (0,) * self.dim) @ c]
        for k in range(1, order + 1):
            out.append(_fill_symmetric(len(X), self.dim, k,
                                       lambda cnt: self.basis.component(tabs, cnt) @ c))
        return out


def stack_from_design(design: dict, coefficients: np.ndarray, n: int, order: int, N: int):
    """Derivative stack of Σ c_k B_k from a precomputed design dictionary."""
    out = [design[(0,) * n] @ coefficients]
    for k in range(1, order + 1):
        out.append(_fill_symmetric(N, n, k, lambda cnt: design[cnt] @ coefficients))
    return out


@dataclass(frozen=True)
class ShiftedFunction(SmoothFunction):
    """x ↦ base(x + shift)."""

    base: SmoothFunction
    shift: tuple

    @property
    def dim(self):
        return self.base.dim

    def derivatives(self, X, order):
        return self.base.derivatives(np.atleast_2d(X) + np.asarray(self.shift, dtype=float), order)
