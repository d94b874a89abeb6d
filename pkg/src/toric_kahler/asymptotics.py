"""Algebraic potentials, their L² coefficients, and large-k asymptotics.

Level-k coefficients are indexed by integer points m ∈ kP̄ ∩ Z^n; the rescaled
point is ν = m/k ∈ P̄ ∩ k⁻¹Z^n, and comparisons with u and φ divide logs by k.
Weights are stored as logarithms so that large k never overflows.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from math import comb, lgamma, log, pi

import numpy as np
from scipy.special import logsumexp

from . import quadrature as quad
from .dual import dual_nodes
from .errors import DegenerateSupport, NewtonDivergence, ValidationError
from .polytope import DelzantPolytope, barycenter, lattice_points
from .potential import SymplecticPotential, interior_samples, legendre_to_kahler
from .threads import worker_count


@dataclass(frozen=True)
class CoefficientVector:
    """Positive weights a_m on the integer points m of kP̄."""

    level: int
    points: np.ndarray              # (M, n) integers
    log_weights: np.ndarray         # (M,)
    exact: tuple | None = None      # integer or Fraction weights when known exactly

    def __post_init__(self):
        if self.level < 1:
            raise ValidationError("level must be a positive integer")
        if not np.all(np.isfinite(self.log_weights)):
            raise ValidationError("weights must be finite and strictly positive")

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def nus(self) -> np.ndarray:
        return self.points / self.level

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def log_weight(self, m) -> float:
        idx = self.index(m)
        return float(self.log_weights[idx])

    def index(self, m) -> int:
        hits = np.flatnonzero(np.all(self.points == np.asarray(m), axis=1))
        if len(hits) == 0:
            raise KeyError(tuple(m))
        return int(hits[0])

    @classmethod
    def from_weights(cls, points, weights, level: int = 1) -> "CoefficientVector":
        pts = np.array(points, dtype=int).reshape(len(points), -1)
        exact = None
        if all(isinstance(w, (int, Fraction)) for w in weights):
            if any(w <= 0 for w in weights):
                raise ValidationError("weights must be strictly positive")
            exact = tuple(weights)
        w = np.array([float(x) for x in weights])
        if np.any(w <= 0):
            raise ValidationError("weights must be strictly positive")
        return cls(level, pts, np.log(w), exact)

    def to_rows(self):
        return [(tuple(int(c) for c in m), float(lw)) for m, lw in zip(self.points, self.log_weights)]


# ------------------------------------------------------------ algebraic potential

@dataclass(frozen=True)
class AlgebraicPotential:
    """φ(s) = log Σ a_m e^{m·s}, or k⁻¹ log Σ a_m e^{kν·t} when normalized.

    Gradient and Hessian are the mean and covariance of the softmax measure.
    """

    coefficients: CoefficientVector
    normalized: bool = False

    @property
    def dim(self) -> int:
        return self.coefficients.dim

    @property
    def support_points(self) -> np.ndarray:
        a = self.coefficients
        return a.nus if self.normalized else a.points.astype(float)

    @property
    def _scale(self) -> int:
        return self.coefficients.level if self.normalized else 1

    def _softmax(self, T):
        T = np.atleast_2d(np.asarray(T, dtype=float))
        z = self.coefficients.log_weights[None, :] + self._scale * T @ self.support_points.T
        lse = logsumexp(z, axis=1)
        return np.exp(z - lse[:, None]), lse

    def value(self, T):
        return self._softmax(T)[1] / self._scale

    def gradient(self, T):
        return self._softmax(T)[0] @ self.support_points

    def hessian(self, T):
        p, _ = self._softmax(T)
        pts = self.support_points
        d = pts[None, :, :] - (p @ pts)[:, None, :]
        return self._scale * np.einsum("nm,nmi,nmj->nij", p, d, d)

    def support(self, T):
        return np.max(np.atleast_2d(T) @ self.support_points.T, axis=1)


def algebraic_potential(a: CoefficientVector, normalized: bool = False) -> AlgebraicPotential:
    """normalized=False uses the integer points m; normalized=True rescales so that
    the gradient image is P̄."""
    if _affine_rank(a.points.astype(float)) < a.dim:
        raise DegenerateSupport("support lies in a proper affine subspace")
    return AlgebraicPotential(a, normalized)


def complex_step_hessian(phi: AlgebraicPotential, T, h: float = 1e-20) -> np.ndarray:
    """∇²φ by complex-step differentiation of the softmax mean (independent of the
    covariance formula)."""
    a = phi.coefficients
    T = np.atleast_2d(np.asarray(T, dtype=float))
    pts = phi.support_points
    scale = phi._scale
    n = a.dim
    out = np.empty((len(T), n, n))
    for k in range(n):
        Tc = T.astype(complex)
        Tc[:, k] += 1j * h
        z = a.log_weights[None, :] + scale * Tc @ pts.T
        z = z - z.real.max(axis=1, keepdims=True)
        e = np.exp(z)
        mean = (e @ pts) / e.sum(axis=1)[:, None]
        out[:, :, k] = mean.imag / h
    return out


def _affine_rank(points: np.ndarray) -> int:
    if len(points) <= 1:
        return 0
    return int(np.linalg.matrix_rank(points[1:] - points[0], tol=1e-9))


def algebraic_legendre(phi: AlgebraicPotential, nu, tol: float = 1e-13, max_iter: int = 200) -> float:
    """u(ν) = sup_t (t·ν − φ(t)) for interior ν, by damped Newton on the softmax mean."""
    nu = np.asarray(nu, dtype=float).reshape(1, -1)
    t = np.zeros_like(nu)
    f = phi.value(t)[0] - t[0] @ nu[0]
    for _ in range(max_iter):
        g = phi.gradient(t) - nu
        if np.max(np.abs(g)) <= tol:
            return float(-f)
        step = -np.linalg.solve(phi.hessian(t)[0], g[0])
        alpha = 1.0
        while alpha > 1e-14:
            cand = t + alpha * step
            fc = phi.value(cand)[0] - cand[0] @ nu[0]
            if fc <= f + 1e-4 * alpha * g[0] @ step or np.max(np.abs(phi.gradient(cand) - nu)) < np.max(np.abs(g)):
                break
            alpha *= 0.5
        t, f = cand, fc
    raise NewtonDivergence(nu[0].tolist(), float(np.max(np.abs(phi.gradient(t) - nu))))


# ------------------------------------------------------------ L² coefficients

def _star_rule(P: DelzantPolytope, nu: np.ndarray, q: int = 12, levels: int = 20,
               ratio: float = 0.25, angular: int = 32):
    """Fan rule with apex ν, graded toward both ν and ∂P along every ray."""
    r, wr = quad.graded01(q, levels, ratio, True, True)
    if P.dim == 1:
        pts, wts = [], []
        for v in P.vertex_array[:, 0]:
            length = abs(v - nu[0])
            if length == 0:
                continue
            pts.append(nu[0] + r * (v - nu[0]))
            wts.append(wr * length)
        return np.concatenate(pts)[:, None], np.concatenate(wts)
    if P.dim != 2:
        raise NotImplementedError("star rule is implemented for n = 1 and n = 2")
    s, ws = quad.gauss_legendre01(angular)
    pts, wts = [], []
    for _, a, b in P.edges:
        a = np.array([float(c) for c in a])
        b = np.array([float(c) for c in b])
        area2 = abs((a[0] - nu[0]) * (b[1] - nu[1]) - (a[1] - nu[1]) * (b[0] - nu[0]))
        if area2 <= 1e-15:
            continue
        R, S = np.meshgrid(r, s, indexing="ij")
        edge = (1 - S)[..., None] * (a - nu) + S[..., None] * (b - nu)
        pts.append((nu + R[..., None] * edge).reshape(-1, 2))
        wts.append((np.outer(wr * r, ws) * area2).ravel())
    return np.concatenate(pts), np.concatenate(wts)


def l2_log_integral(u: SymplecticPotential, nu, k: float, route: str = "dual") -> float:
    """log I_ν(k) with I_ν(k) = ∫ e^{−k(φ − t·ν)} det∇²φ dt.

    route="dual" samples the dual lattice around Du(ν); it needs ν interior, so
    boundary ν fall back to the primal form. route="primal" integrates
    ∫_P exp(k[u(x) − (x − ν)·Du(x)]) dx on a fan centered at ν, where the
    exponent peaks.
    """
    P = u.polytope
    nu = np.asarray(nu, dtype=float).reshape(P.dim)
    interior = bool(P.contains(nu[None])[0])
    if route == "dual" and interior:
        nodes = dual_nodes(u, nu, k)
        detU = 1.0 / np.linalg.det(u.hessian(nodes.x))
        return nodes.log_integral(detU)
    if route not in ("dual", "primal"):
        raise ValueError(f"unknown route {route!r}")
    X, w = _star_rule(P, nu)
    keep = P.contains(X)
    X, w = X[keep], w[keep]
    f, g = u.derivatives(X, 1)[:2]
    u_nu = float(u.value(nu[None])[0]) if interior else _boundary_value(u, nu)
    expo = k * (f - np.sum((X - nu) * g, axis=1) - u_nu)
    return float(k * u_nu + logsumexp(expo, b=w))


def _boundary_value(u, nu):
    """u at a boundary point (finite by the x log x profile)."""
    return float(u.value(nu[None])[0])


def l2_coefficients(u: SymplecticPotential, k: int, route: str = "dual",
                    threads: int | None = None) -> CoefficientVector:
    """a_m = 1/I_{m/k}(k) over the integer points m of kP̄."""
    P = u.polytope
    pts = lattice_points(P, k)
    nus = [np.array(m, dtype=float) / k for m in pts]
    with ThreadPoolExecutor(worker_count(threads)) as pool:
        logs = list(pool.map(lambda nu: l2_log_integral(u, nu, k, route), nus))
    return CoefficientVector(k, np.array(pts, dtype=int), -np.array(logs))


def laplace_log_approximation(u: SymplecticPotential, nu, k: float) -> float:
    """Leading Laplace term: log[(2π/k)^{n/2} e^{k u(ν)} √det ∇²φ(t₀)], ∇²φ(t₀) = (∇²u(ν))⁻¹."""
    nu = np.atleast_2d(np.asarray(nu, dtype=float))
    n = nu.shape[1]
    H = u.hessian(nu)[0]
    return float(n / 2 * log(2 * pi / k) + k * u.value(nu)[0] - 0.5 * np.linalg.slogdet(H)[1])


# ------------------------------------------------------------ Veronese convolution

def veronese_convolution(a: CoefficientVector, k: int) -> CoefficientVector:
    """k-fold convolution B_μ = Σ_{ν₁+…+ν_k=μ} a_{ν₁}⋯a_{ν_k} of level-1 weights.

    Exact (integer/Fraction) when the input weights are exact; otherwise
    accumulated in log space.
    """
    if a.level != 1:
        raise ValidationError("Veronese convolution takes level-1 coefficients")
    if k < 1:
        raise ValidationError("k must be a positive integer")
    base = [tuple(int(c) for c in m) for m in a.points]
    if a.exact is not None:
        acc = dict(zip(base, a.exact))
        for _ in range(k - 1):
            nxt: dict = {}
            for mu, bmu in acc.items():
                for m, am in zip(base, a.exact):
                    key = tuple(x + y for x, y in zip(mu, m))
                    nxt[key] = nxt.get(key, 0) + bmu * am
            acc = nxt
        keys = sorted(acc)
        vals = [acc[m] for m in keys]
        logs = np.array([_exact_log(v) for v in vals])
        return CoefficientVector(k, np.array(keys, dtype=int), logs, tuple(vals))
    acc = dict(zip(base, a.log_weights))
    for _ in range(k - 1):
        terms: dict = {}
        for mu, lmu in acc.items():
            for m, lm in zip(base, a.log_weights):
                key = tuple(x + y for x, y in zip(mu, m))
                terms.setdefault(key, []).append(lmu + lm)
        acc = {m: float(logsumexp(v)) for m, v in terms.items()}
    keys = sorted(acc)
    return CoefficientVector(k, np.array(keys, dtype=int), np.array([acc[m] for m in keys]))


def _exact_log(v) -> float:
    if isinstance(v, Fraction):
        return _exact_log(v.numerator) - _exact_log(v.denominator)
    v = int(v)
    shift = max(v.bit_length() - 60, 0)
    return log(v >> shift) + shift * log(2)


def binomial_reference(k: int) -> list[int]:
    return [comb(k, j) for j in range(k + 1)]


def constant_term_by_quadrature(a: CoefficientVector, k: int) -> float:
    """(2π)^{-1} ∫_0^{2π} f(θ)^k dθ with f(θ) = Σ a_m e^{imθ}, by the trapezoid rule
    (exact for trigonometric polynomials with enough nodes)."""
    if a.dim != 1:
        raise ValidationError("the torus identity is implemented for n = 1")
    span = int(np.max(np.abs(a.points))) * k
    M = 2 * span + 2
    theta = 2 * np.pi * np.arange(M) / M
    f = np.exp(1j * np.outer(theta, a.points[:, 0])) @ a.weights
    return float(np.mean(f ** k).real)


# ------------------------------------------------------------ density roundtrip

@dataclass(frozen=True)
class RoundtripResult:
    k: int
    error: float
    samples: int


def density_roundtrip(u: SymplecticPotential, k: int, density: int = 12, margin: float = 0.1,
                      route: str = "dual", threads: int | None = None) -> RoundtripResult:
    """sup over a compact dual sample of |φ^{(k)}(t) − φ(t)| after removing the
    value at t = Du(barycenter), with φ^{(k)}(t) = k⁻¹ log Σ a_m e^{kν·t}."""
    a = l2_coefficients(u, k, route, threads)
    phik = algebraic_potential(a, normalized=True)
    phi = legendre_to_kahler(u)
    X = interior_samples(u.polytope, density, margin)
    T = u.gradient(X)
    diff = phik.value(T) - phi.value(T)
    ref = u.gradient(np.atleast_2d([float(c) for c in barycenter(u.polytope)]))
    d0 = phik.value(ref)[0] - phi.value(ref)[0]
    return RoundtripResult(k, float(np.max(np.abs(diff - d0))), len(T))


def log_binomial(k: int, j: int) -> float:
    return lgamma(k + 1) - lgamma(j + 1) - lgamma(k - j + 1)
