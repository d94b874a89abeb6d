"""Symplectic potentials u = u_G + v on P, Kähler potentials on the dual space,
the Legendre transform between them, grid functions, and admissibility checks."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import xlogy

from .errors import NewtonDivergence, OutsidePolytope, RangeViolation, ValidationError
from .functions import (PolynomialFunction, SmoothFunction, SumFunction, ZeroFunction,
                        _fill_symmetric, monomials_up_to)
from .polytope import DelzantPolytope, barycenter
from .rational import Poly

NEWTON_TOL = 1e-12


def guillemin_derivatives(P: DelzantPolytope, X: np.ndarray, order: int) -> list[np.ndarray]:
    """Closed-form derivatives of Σ ℓ_r log ℓ_r up to the given order (≤ 4)."""
    lam = P.normals
    ell = P.slacks(X)
    out = [np.sum(xlogy(ell, ell), axis=1)]
    if order >= 1:
        out.append((np.log(ell) + 1) @ lam)
    if order >= 2:
        out.append(np.einsum("nr,ri,rj->nij", 1 / ell, lam, lam))
    if order >= 3:
        out.append(-np.einsum("nr,ri,rj,rk->nijk", ell ** -2, lam, lam, lam))
    if order >= 4:
        out.append(2 * np.einsum("nr,ri,rj,rk,rl->nijkl", ell ** -3, lam, lam, lam, lam))
    return out


@dataclass(frozen=True)
class SymplecticPotential:
    """u = reference + correction, with the Guillemin reference by default.

    reference="none" drops the Guillemin term (for smooth test potentials such
    as ‖x‖²/2, which are not admissible but are convenient oracles).
    """

    polytope: DelzantPolytope
    correction: SmoothFunction = None
    reference: str = "guillemin"

    def __post_init__(self):
        if self.correction is None:
            object.__setattr__(self, "correction", ZeroFunction(self.polytope.dim))
        if self.reference not in ("guillemin", "none"):
            raise ValidationError(f"unknown reference {self.reference!r}")

    @property
    def dim(self) -> int:
        return self.polytope.dim

    def derivatives(self, X, order: int = 2) -> list[np.ndarray]:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = self.correction.derivatives(X, order)
        if self.reference == "guillemin":
            out = [a + b for a, b in zip(out, guillemin_derivatives(self.polytope, X, order))]
        return out

    def value(self, X):
        return self.derivatives(X, 0)[0]

    def gradient(self, X):
        return self.derivatives(X, 1)[1]

    def hessian(self, X):
        return self.derivatives(X, 2)[2]

    def with_correction(self, extra: SmoothFunction) -> "SymplecticPotential":
        return SymplecticPotential(self.polytope, SumFunction((self.correction, extra)), self.reference)


def guillemin_potential(P: DelzantPolytope) -> SymplecticPotential:
    return SymplecticPotential(P)


def quadratic_potential(P: DelzantPolytope) -> SymplecticPotential:
    """‖x‖²/2 with no Guillemin term."""
    from fractions import Fraction
    terms = {}
    for i in range(P.dim):
        e = [0] * P.dim
        e[i] = 2
        terms[tuple(e)] = Fraction(1, 2)
    return SymplecticPotential(P, PolynomialFunction(Poly(P.dim, terms)), reference="none")


def random_admissible_perturbation(P: DelzantPolytope, seed: int, amplitude: float = 0.5,
                                   degree: int = 4) -> SymplecticPotential:
    """u_G plus a seeded random polynomial of degree 2..degree whose Hessian is
    bounded by ``amplitude`` times the smallest Guillemin eigenvalue on P."""
    rng = np.random.default_rng(seed)
    basis = monomials_up_to(P.dim, degree, min_degree=2)
    coeffs = rng.normal(size=len(basis))
    v = PolynomialFunction(Poly(P.dim, {next(iter(b.poly.terms)): float(c) for b, c in zip(basis, coeffs)}))
    X = interior_samples(P, 12, margin=1e-3)
    hv = v.derivatives(np.concatenate([X, P.vertex_array]), 2)[2]
    hg = guillemin_derivatives(P, X, 2)[2]
    bound_v = np.max(np.abs(np.linalg.eigvalsh(hv)))
    floor_g = np.min(np.linalg.eigvalsh(hg))
    scale = amplitude * floor_g / bound_v
    return SymplecticPotential(P, PolynomialFunction(Poly(P.dim, {e: c * scale for e, c in v.poly.terms.items()})))


def interior_samples(P: DelzantPolytope, density: int, margin: float = 1e-3) -> np.ndarray:
    """Points of P on a collapsed grid over the barycentric fan.

    r ranges over (0, 1 − margin] so samples approach every facet; margin=0
    includes boundary points.
    """
    b = np.array([float(c) for c in barycenter(P)])
    r = np.linspace(0, 1 - margin, density + 1)[1:]
    if P.dim == 1:
        ends = P.vertex_array[:, 0]
        pts = [b[0] + r * (e - b[0]) for e in ends]
        return np.concatenate([[b[0]], *pts])[:, None]
    s = np.linspace(0, 1, density + 1)
    out = [b[None, :]]
    for _, a, c in P.edges:
        a = np.array([float(x) for x in a])
        c = np.array([float(x) for x in c])
        R, S = np.meshgrid(r, s, indexing="ij")
        edge = (1 - S)[..., None] * (a - b) + S[..., None] * (c - b)
        out.append((b + R[..., None] * edge).reshape(-1, 2))
    return np.unique(np.round(np.concatenate(out), 15), axis=0)


def boundary_samples(P: DelzantPolytope, per_facet: int) -> tuple[np.ndarray, np.ndarray]:
    """Points on ∂P with the index of a facet they lie on; vertices included."""
    if P.dim == 1:
        return P.vertex_array.copy(), np.array([P.facets.index(next(
            f for f in P.facets if f.slack(v) == 0)) for v in P.vertices])
    pts, idx = [], []
    s = np.linspace(0, 1, per_facet + 1)[:-1]
    for r, a, c in P.edges:
        a = np.array([float(x) for x in a])
        c = np.array([float(x) for x in c])
        pts.append(a + s[:, None] * (c - a))
        idx.append(np.full(len(s), r))
    return np.concatenate(pts), np.concatenate(idx)


# ---------------------------------------------------------------- dual side

@dataclass(frozen=True)
class KahlerPotential:
    """φ on R^n with gradient and Hessian; support is Φ(t) = max_p p·t when known."""

    dim: int
    value: Callable
    gradient: Callable
    hessian: Callable
    support_vertices: np.ndarray | None = None

    def support(self, T) -> np.ndarray:
        T = np.atleast_2d(T)
        return np.max(T @ self.support_vertices.T, axis=1)


def _spd_solve(H: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Batched H⁻¹r, falling back to a pseudo-inverse when H is numerically singular."""
    try:
        return np.linalg.solve(H, r[..., None])[..., 0]
    except np.linalg.LinAlgError:
        return np.einsum("nij,nj->ni", np.linalg.pinv(H, hermitian=True), r)


def legendre_solve(u: SymplecticPotential, T: np.ndarray, x0: np.ndarray | None = None,
                   tol: float = NEWTON_TOL, max_iter: int = 200) -> np.ndarray:
    """Solve Du(x) = t for each row of T by damped Newton from the barycenter.

    Each step starts at most 0.9 of the way to ∂P and backtracking halves it
    until the residual decreases. A node whose residual cannot be reduced in floating point is
    accepted when it sits within rounding distance of ∂P (slacks near machine
    precision); anywhere else it is reported as a divergence.
    """
    P = u.polytope
    T = np.atleast_2d(np.asarray(T, dtype=float))
    N = len(T)
    if x0 is None:
        x = np.tile([float(c) for c in barycenter(P)], (N, 1))
    else:
        x = np.array(np.broadcast_to(x0, T.shape), dtype=float)
    f, g, H = u.derivatives(x, 2)
    psi = f - np.sum(T * x, axis=1)
    res = np.linalg.norm(g - T, axis=1)
    goal = tol * np.maximum(1.0, np.abs(T).max(axis=1))
    live = res > goal
    for _ in range(max_iter):
        act = np.flatnonzero(live)
        if len(act) == 0:
            break
        step = _spd_solve(H[act], T[act] - g[act])
        slope = np.einsum("ni,ni->n", g[act] - T[act], step)
        # fraction-to-boundary: start at most 0.9 of the way to the nearest facet
        rate = step @ P.normals.T
        room = np.where(rate < 0, P.slacks(x[act]) / np.where(rate < 0, -rate, 1.0), np.inf).min(axis=1)
        alpha = np.minimum(1.0, 0.9 * room)
        pending = np.ones(len(act), bool)
        scale = 4e-16 * np.maximum(1.0, np.abs(x[act]).max(axis=1))
        size = np.abs(step).max(axis=1)
        for halving in range(60):
            # the first trial always runs; later halvings stop at rounding level
            idx = np.flatnonzero(pending if halving == 0 else pending & (alpha * size >= scale))
            if len(idx) == 0:
                break
            cand = x[act[idx]] + alpha[idx, None] * step[idx]
            inside = P.contains(cand)
            if inside.any():
                sel = idx[inside]
                cf, cg, cH = u.derivatives(cand[inside], 2)
                cpsi = cf - np.sum(T[act[sel]] * cand[inside], axis=1)
                cr = np.linalg.norm(cg - T[act[sel]], axis=1)
                # strict Armijo on the convex objective u − t·x (no float ties), or residual decrease
                better = (cpsi < psi[act[sel]] + 1e-4 * alpha[sel] * slope[sel]) | (cr < res[act[sel]])
                better &= np.isfinite(cr)
                good = sel[better]
                x[act[good]] = cand[inside][better]
                g[act[good]], H[act[good]] = cg[better], cH[better]
                res[act[good]], psi[act[good]] = cr[better], cpsi[better]
                pending[good] = False
            alpha[pending] *= 0.5
        # steps at rounding level mean the residual floor has been reached
        pending |= alpha * size < scale
        stuck = act[pending]
        if len(stuck):
            near_edge = P.slacks(x[stuck]).min(axis=1) < 1e-9 * max(1.0, P.diameter)
            bad = stuck[~near_edge & (res[stuck] > 1e-8 * np.maximum(1.0, np.abs(T[stuck]).max(axis=1)))]
            if len(bad):
                w = bad[np.argmax(res[bad])]
                raise NewtonDivergence(T[w].tolist(), float(res[w]))
            live[stuck] = False
        live &= res > goal
    else:
        left = np.flatnonzero(live)
        far = left[(P.slacks(x[left]).min(axis=1) >= 1e-9 * max(1.0, P.diameter))
                   & (res[left] > 1e-8 * np.maximum(1.0, np.abs(T[left]).max(axis=1)))]
        if len(far):
            w = far[np.argmax(res[far])]
            raise NewtonDivergence(T[w].tolist(), float(res[w]))
    return x


@dataclass(frozen=True)
class LegendreDual(KahlerPotential):
    """The Kähler potential of a symplectic potential u."""

    potential: SymplecticPotential = None


def legendre_to_kahler(u: SymplecticPotential) -> LegendreDual:
    def matched(T):
        return legendre_solve(u, np.atleast_2d(T))

    def value(T):
        T = np.atleast_2d(T)
        x = matched(T)
        return np.sum(T * x, axis=1) - u.value(x)

    def gradient(T):
        return matched(T)

    def hessian(T):
        return np.linalg.inv(u.hessian(matched(T)))

    return LegendreDual(u.dim, value, gradient, hessian, u.polytope.vertex_array, u)


@dataclass(frozen=True)
class LegendreCorrection(SmoothFunction):
    """v = u − u_G where u is the Legendre transform of a Kähler potential φ.

    Derivatives of order ≤ 2 are exact (Du = t, ∇²u = (∇²φ)⁻¹); orders 3 and 4
    use central differences of the Hessian.
    """

    phi: KahlerPotential
    polytope: DelzantPolytope
    reference: str = "guillemin"
    fd_step: float = 1e-4

    @property
    def dim(self):
        return self.polytope.dim

    def dual_points(self, X, tol=NEWTON_TOL, max_iter=200):
        X = np.atleast_2d(X)
        if not np.all(self.polytope.contains(X)):
            raise OutsidePolytope("Legendre evaluation requested outside P")
        T = np.zeros_like(X)
        for _ in range(max_iter):
            g = self.phi.gradient(T)
            r = X - g
            if np.max(np.abs(r)) <= tol:
                return T
            H = self.phi.hessian(T)
            step = np.linalg.solve(H, r[..., None])[..., 0]
            alpha = np.ones(len(T))
            for _ in range(50):
                cand = T + alpha[:, None] * step
                cr = np.linalg.norm(X - self.phi.gradient(cand), axis=1)
                bad = cr >= np.linalg.norm(r, axis=1) * (1 - 1e-4 * alpha)
                bad &= np.linalg.norm(r, axis=1) > tol
                if not bad.any():
                    break
                alpha[bad] *= 0.5
            T = T + alpha[:, None] * step
        g = self.phi.gradient(T)
        if np.max(np.abs(X - g)) > 1e-8:
            raise NewtonDivergence(X[np.argmax(np.abs(X - g).max(axis=1))].tolist(),
                                   float(np.max(np.abs(X - g))))
        return T

    def _full(self, X, order):
        T = self.dual_points(X)
        val = np.sum(T * X, axis=1) - self.phi.value(T)
        out = [val, T, np.linalg.inv(self.phi.hessian(T))][: order + 1]
        return out

    def derivatives(self, X, order):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = self._full(X, min(order, 2))
        if order >= 3:
            h = self.fd_step
            n = self.dim
            d3 = np.empty((len(X), n, n, n))
            for k in range(n):
                e = np.zeros(n)
                e[k] = h
                d3[..., k] = (self._full(X + e, 2)[2] - self._full(X - e, 2)[2]) / (2 * h)
            out.append(d3)
        if order >= 4:
            h = self.fd_step
            n = self.dim
            d4 = np.empty((len(X), n, n, n, n))
            for k in range(n):
                for l in range(n):
                    ek = np.zeros(n); ek[k] = h
                    el = np.zeros(n); el[l] = h
                    d4[..., k, l] = (self._full(X + ek + el, 2)[2] - self._full(X + ek - el, 2)[2]
                                     - self._full(X - ek + el, 2)[2]
                                     + self._full(X - ek - el, 2)[2]) / (4 * h * h)
            out.append(d4)
        if self.reference == "guillemin":
            out = [a - b for a, b in zip(out, guillemin_derivatives(self.polytope, X, order))]
        return out


def legendre_to_symplectic(phi: KahlerPotential, P: DelzantPolytope,
                           check_points: int = 64) -> SymplecticPotential:
    """u(x) = t·x − φ(t) at ∇φ(t) = x, stored as a correction to u_G."""
    T = np.random.default_rng(0).normal(scale=5.0, size=(check_points, P.dim))
    T = np.concatenate([T, 40 * T / np.linalg.norm(T, axis=1, keepdims=True)])
    G = phi.gradient(T)
    if not np.all(P.contains(G, strict=False, tol=1e-12)):
        bad = T[~P.contains(G, strict=False, tol=1e-12)][0]
        raise RangeViolation(f"∇φ leaves P at t = {bad.tolist()}")
    return SymplecticPotential(P, LegendreCorrection(phi, P))


def sup_distance(u1: SymplecticPotential, u2: SymplecticPotential, samples: np.ndarray | int = 40) -> float:
    if u1.polytope is not u2.polytope and u1.polytope.facets != u2.polytope.facets:
        raise ValidationError("potentials live on different polytopes")
    X = interior_samples(u1.polytope, samples, margin=0.0) if isinstance(samples, int) else samples
    return float(np.max(np.abs(u1.value(X) - u2.value(X))))


def dual_sup_distance(u1: SymplecticPotential, u2: SymplecticPotential, radius: float = 30.0,
                      points: int = 201) -> float:
    """sup |φ₁ − φ₂| over a dual box, evaluated by Legendre solves."""
    n = u1.dim
    axis = np.linspace(-radius, radius, points if n == 1 else int(np.sqrt(points * 40)))
    T = np.stack(np.meshgrid(*[axis] * n, indexing="ij"), axis=-1).reshape(-1, n)
    p1, p2 = legendre_to_kahler(u1), legendre_to_kahler(u2)
    return float(np.max(np.abs(p1.value(T) - p2.value(T))))


# -------------------------------------------------------------- admissibility

@dataclass
class AdmissibilityReport:
    passed: bool
    min_hessian_eigenvalue: float
    hessian_witness: list | None = None
    boundary_witness: list | None = None
    face_witness: list | None = None
    checks: dict = field(default_factory=dict)

    def to_json(self):
        return {"passed": self.passed, "min_hessian_eigenvalue": self.min_hessian_eigenvalue,
                "hessian_witness": self.hessian_witness, "boundary_witness": self.boundary_witness,
                "face_witness": self.face_witness, "checks": self.checks}


def check_admissible(u: SymplecticPotential, tolerance: float = 0.0, density: int = 60) -> AdmissibilityReport:
    """Necessary-condition test of the Guillemin boundary behavior by sampling."""
    P = u.polytope
    X = interior_samples(P, density, margin=1e-4)
    H = u.hessian(X)
    eig = np.linalg.eigvalsh(H)[:, 0]
    i = int(np.argmin(eig))
    hess_ok = bool(eig[i] > tolerance) and bool(np.all(np.isfinite(eig)))
    hess_witness = None if hess_ok else X[i].tolist()

    B, _ = boundary_samples(P, density)
    V = u.correction.derivatives(B, 2)
    finite = np.all([np.all(np.isfinite(d.reshape(len(B), -1)), axis=1) for d in V], axis=0)
    bnd_ok = bool(finite.all())
    bnd_witness = None if bnd_ok else B[np.argmin(finite)].tolist()

    face_ok, face_witness = True, None
    if P.dim == 2 and u.reference == "guillemin":
        s = np.linspace(0, 1, density + 1)[1:-1]
        for r, a, c in P.edges:
            a = np.array([float(x) for x in a])
            c = np.array([float(x) for x in c])
            pts = a + s[:, None] * (c - a)
            tangent = (c - a) / np.linalg.norm(c - a)
            ell = P.slacks(pts)
            lam = P.normals
            mask = np.arange(len(P.facets)) != r
            hg = np.einsum("nr,ri,rj->nij", 1 / ell[:, mask], lam[mask], lam[mask])
            hv = u.correction.derivatives(pts, 2)[2]
            curv = np.einsum("i,nij,j->n", tangent, hg + hv, tangent)
            if curv.min() <= tolerance:
                face_ok = False
                face_witness = pts[np.argmin(curv)].tolist()
                break
    passed = hess_ok and bnd_ok and face_ok
    return AdmissibilityReport(passed, float(eig[i]), hess_witness, bnd_witness, face_witness,
                               {"hessian": hess_ok, "boundary": bnd_ok, "faces": face_ok})


# -------------------------------------------------------------- grid functions

OUTSIDE, INTERIOR, BOUNDARY = 0, 1, 2


@dataclass
class GridFunction:
    """Values on a tensor grid over the bounding box of P, NaN outside P."""

    axes: list
    values: np.ndarray
    flags: np.ndarray

    @property
    def spacing(self) -> list[float]:
        return [float(a[1] - a[0]) if len(a) > 1 else 0.0 for a in self.axes]

    @property
    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack(mesh, axis=-1).reshape(-1, len(self.axes))

    def interior_points(self) -> np.ndarray:
        return self.points[self.flags.ravel() == INTERIOR]

    def with_values(self, values: np.ndarray) -> "GridFunction":
        return GridFunction(self.axes, np.asarray(values, dtype=float).reshape(self.flags.shape),
                            self.flags)

    def fill(self, f: Callable, where=(INTERIOR, BOUNDARY)) -> "GridFunction":
        vals = np.full(self.flags.size, np.nan)
        mask = np.isin(self.flags.ravel(), where)
        if mask.any():
            vals[mask] = f(self.points[mask])
        return self.with_values(vals)


def grid_template(P: DelzantPolytope, nodes: int | Sequence[int], tol: float = 1e-12) -> GridFunction:
    n = P.dim
    counts = [nodes] * n if isinstance(nodes, int) else list(nodes)
    if any(c < 2 for c in counts):
        raise ValidationError("grids need at least two nodes per axis")
    lo = P.vertex_array.min(axis=0)
    hi = P.vertex_array.max(axis=0)
    axes = [np.linspace(lo[i], hi[i], counts[i]) for i in range(n)]
    g = GridFunction(axes, np.empty(0), np.empty(0, int))
    pts = g.points
    s = P.slacks(pts) / np.linalg.norm(P.normals, axis=1)
    scale = tol * max(1.0, P.diameter)
    flags = np.where(np.all(s > scale, axis=1), INTERIOR,
                     np.where(np.all(s > -scale, axis=1), BOUNDARY, OUTSIDE))
    flags = flags.reshape(counts)
    return GridFunction(axes, np.full(counts, np.nan), flags)


@dataclass(frozen=True)
class GridCorrection(SmoothFunction):
    """Local tensor Lagrange interpolation of grid values (window of ``width`` nodes per axis).

    Windows are chosen among those whose nodes all carry finite values, so
    evaluation uses cells inside P̄ only.
    """

    grid: GridFunction
    width: int = 6

    @property
    def dim(self):
        return len(self.grid.axes)

    def _window(self, axis_nodes, x, valid_start):
        h = axis_nodes[1] - axis_nodes[0]
        pos = (x - axis_nodes[0]) / h
        start = int(np.floor(pos)) - self.width // 2 + 1
        starts = sorted(range(len(axis_nodes) - self.width + 1), key=lambda s: abs(s - start))
        return [s for s in starts if valid_start(s)]

    @staticmethod
    def _lagrange(nodes, x, order):
        """Derivatives 0..order of each Lagrange basis polynomial at x."""
        m = len(nodes)
        out = np.zeros((order + 1, m))
        for j in range(m):
            others = np.delete(nodes, j)
            coeffs = np.poly(others) / np.prod(nodes[j] - others)
            p = np.poly1d(coeffs)
            for d in range(order + 1):
                out[d, j] = p.deriv(d)(x) if d else p(x)
        return out

    def derivatives(self, X, order):
        X = np.atleast_2d(X)
        n = self.dim
        vals = self.grid.values
        out = [np.zeros((len(X),) + (n,) * k) for k in range(order + 1)]
        if len(self.grid.axes[0]) < self.width:
            raise ValidationError("grid too coarse for the interpolation window")
        for p_idx, x in enumerate(X):
            found = None
            if n == 1:
                for s in self._window(self.grid.axes[0], x[0],
                                      lambda s: np.all(np.isfinite(vals[s:s + self.width]))):
                    found = (s,)
                    break
            else:
                cand0 = self._window(self.grid.axes[0], x[0], lambda s: True)
                cand1 = self._window(self.grid.axes[1], x[1], lambda s: True)
                for s0 in cand0[:4]:
                    for s1 in cand1[:4]:
                        block = vals[s0:s0 + self.width, s1:s1 + self.width]
                        if np.all(np.isfinite(block)):
                            found = (s0, s1)
                            break
                    if found:
                        break
            if found is None:
                raise OutsidePolytope(f"no finite interpolation window at {x.tolist()}")
            L = [self._lagrange(self.grid.axes[i][found[i]:found[i] + self.width], x[i], order)
                 for i in range(n)]
            block = vals[tuple(slice(s, s + self.width) for s in found)]
            for k in range(order + 1):
                def comp(counts):
                    if n == 1:
                        return L[0][counts[0]] @ block
                    return L[0][counts[0]] @ block @ L[1][counts[1]]
                if k == 0:
                    out[0][p_idx] = comp((0,) * n)
                else:
                    out[k][p_idx] = _fill_symmetric(1, n, k, comp)[0]
        return out
