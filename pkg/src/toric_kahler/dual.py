"""Integration against e^{−k(φ(t) − t·ν)} on the dual space R^n.

The integrand is sampled on the lattice t₀ + hZ^n, where t₀ = Du(ν) is the
peak. Nodes are grown ring by ring (max-norm shells of the index lattice), and
each ring's Newton solves for x(t) = ∇φ(t) start from the parent node in the
previous ring. A node is dropped when the lower bound

    k(φ(t) − t·ν) ≥ k(Φ(t) − t·ν − max_vertex u) ,   Φ(t) = max_p p·t,

already exceeds the peak value by ``cut``, and again afterwards when the exact
exponent does. The lower-bound sublevel set is convex and
contains t₀, so the growth stops at the first ring with no surviving node.
The trapezoid rule is spectrally accurate for this smooth, exponentially
decaying integrand.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .errors import TruncationBudgetExceeded, ValidationError
from .potential import SymplecticPotential, legendre_solve

DEFAULT_CUT = 34.0
DEFAULT_BUDGET = 2_000_000


@dataclass(frozen=True)
class DualNodes:
    """Sampled dual lattice.

    ``weights`` are h^n e^{−(E(t) − E_min)}; the true integral of g is
    exp(log_scale) · Σ weights·g.
    """

    t: np.ndarray
    x: np.ndarray
    weights: np.ndarray
    log_scale: float
    spacing: float
    rings: int

    def integral(self, values) -> float:
        return float(np.exp(self.log_scale) * np.tensordot(self.weights, values, axes=(0, 0)))

    def log_integral(self, values=None) -> float:
        s = self.weights.sum() if values is None else np.tensordot(self.weights, values, axes=(0, 0))
        return float(np.log(s) + self.log_scale)


def _ring(n: int, j: int) -> np.ndarray:
    if j == 0:
        return np.zeros((1, n), dtype=int)
    if n == 1:
        return np.array([[-j], [j]])
    if n == 2:
        r = np.arange(-j, j + 1)
        inner = np.arange(-j + 1, j)
        edges = [np.stack([r, np.full_like(r, -j)], 1), np.stack([r, np.full_like(r, j)], 1),
                 np.stack([np.full_like(inner, -j), inner], 1), np.stack([np.full_like(inner, j), inner], 1)]
        return np.concatenate(edges)
    pts = np.array(list(product(range(-j, j + 1), repeat=n)))
    return pts[np.abs(pts).max(axis=1) == j]


def default_spacing(u: SymplecticPotential, nu, k: float = 1.0) -> float:
    """0.25 for k = 1, shrinking with the width of the peak at larger k."""
    U = np.linalg.inv(u.hessian(np.atleast_2d(nu))[0])
    top = float(np.linalg.eigvalsh(U)[-1])
    return min(0.25, 0.25 / np.sqrt(k * top))


def dual_nodes(u: SymplecticPotential, nu, k: float = 1.0, spacing: float | None = None,
               cut: float = DEFAULT_CUT, budget: int = DEFAULT_BUDGET) -> DualNodes:
    P = u.polytope
    n = P.dim
    nu = np.asarray(nu, dtype=float).reshape(n)
    if not P.contains(nu[None])[0]:
        raise ValidationError(f"ν = {nu.tolist()} is not interior to P")
    h = spacing or default_spacing(u, nu, k)
    V = P.vertex_array
    top = float(np.max(u.value(V)))
    u_nu = float(u.value(nu[None])[0])
    t0 = u.gradient(nu[None])[0]
    allowance = top - u_nu + cut / k

    ts, xs = [t0[None]], [nu[None]]
    prev = {(0,) * n: nu}
    j = 0
    total = 1
    while True:
        j += 1
        idx = _ring(n, j)
        T = t0 + h * idx
        keep = np.max(T @ V.T, axis=1) - T @ nu <= allowance
        if not keep.any():
            break
        idx, T = idx[keep], T[keep]
        total += len(T)
        if total > budget:
            raise TruncationBudgetExceeded(f"dual lattice exceeded {budget} nodes at ring {j}")
        parents = np.rint(idx * ((j - 1) / j)).astype(int)
        x0 = np.array([prev.get(tuple(p), nu) for p in parents])
        X = legendre_solve(u, T, x0)
        ts.append(T)
        xs.append(X)
        prev = {tuple(i): x for i, x in zip(idx, X)}
    T = np.concatenate(ts)
    X = np.concatenate(xs)
    # E(t) − E_min with E = k(t·x − u(x) − t·ν) and E_min = −k u(ν) at t₀
    excess = k * (np.sum(T * (X - nu), axis=1) - u.value(X) + u_nu)
    # the ring test used a lower bound; apply the cut to the exact exponent too
    keep = excess <= cut
    T, X, excess = T[keep], X[keep], excess[keep]
    weights = h ** n * np.exp(-excess)
    return DualNodes(T, X, weights, k * u_nu, h, j)
