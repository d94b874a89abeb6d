"""Desk-scale solvers for the toric scalar-curvature and soliton equations.

Two-dimensional corrections v (u = u_G + v) live in a space of tensor
Chebyshev polynomials on the bounding box of P with all affine terms removed,
so admissibility near ∂P is carried by the Guillemin reference. The
prescribed-curvature equation S(u) = A is solved by Newton's method on the
convex functional F_A restricted to that space (a Ritz method); the soliton
equation ρ(u) = a₀ + γ·x by Gauss–Newton least squares. Residuals are
measured at the interior nodes of a tensor grid clipped to P.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from .curvature import abreu_scalar
from .errors import (InconsistentA, LinearSolveFailure, NonpositiveQ, SingularHessian,
                     ValidationError)
from .functional import (AffineData, L_A, PLConvexFunction, _as_callable, _as_exact, crease_value,
                         default_scheme)
from .functions import AffineFunction, ChebyshevBasis, ChebyshevFunction
from .polytope import DelzantPolytope, FanoPolytope, barycenter, build_quadrature
from .potential import SymplecticPotential, grid_template, guillemin_derivatives, guillemin_potential
from .rational import Poly
from .soliton import _logdet, soliton_constants

CONVERGED, STALLED, COLLAPSE = "Converged", "Stalled", "CollapseSuspected"


@dataclass
class SolveReport:
    potential: SymplecticPotential
    residuals: list
    iterations: int
    status: str
    witness: PLConvexFunction | None = None
    tolerance: float = 0.0
    degree: int = 0
    norms: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    @property
    def residual(self) -> float:
        return self.residuals[-1]

    def to_json(self):
        out = {"status": self.status, "iterations": self.iterations, "residual": self.residual,
               "residual_history": list(self.residuals), "tolerance": self.tolerance,
               "degree": self.degree, "correction_norms": list(self.norms),
               "witness": None if self.witness is None else self.witness.to_json()}
        for k, v in self.extras.items():
            out[k] = v.tolist() if isinstance(v, np.ndarray) else v
        return out


# ------------------------------------------------------------------ 1D

def extremal_profile_1d(P: DelzantPolytope, A: AffineData) -> Poly:
    """q with q'' = −A, q(α) = q(β) = 0, q'(α) = 1, q'(β) = −1 (1/q = u'')."""
    if P.dim != 1:
        raise ValidationError("extremal_profile_1d needs an interval")
    alpha, beta = P.vertices[0][0], P.vertices[-1][0]
    if not isinstance(A, AffineData):
        A = AffineData(A, (0,))
    a0, a1 = A.constant, A.gradient[0]
    exact = A.is_rational
    if exact:
        a0, a1 = Fraction(a0), Fraction(a1)
    # q = −a0 x²/2 − a1 x³/6 + c1 x + c0
    base = lambda x: -a0 * x ** 2 / 2 - a1 * x ** 3 / 6
    dbase = lambda x: -a0 * x - a1 * x ** 2 / 2
    c1 = -(base(beta) - base(alpha)) / (beta - alpha)
    c0 = -base(alpha) - c1 * alpha
    slope_a = dbase(alpha) + c1
    slope_b = dbase(beta) + c1
    ok = (slope_a == 1 and slope_b == -1) if exact else \
        (abs(float(slope_a) - 1) <= 1e-10 and abs(float(slope_b) + 1) <= 1e-10)
    if not ok:
        raise InconsistentA(f"endpoint slopes {slope_a}, {slope_b} instead of 1, −1; "
                            f"A is not the extremal affine function of P")
    one = Fraction(1) if exact else 1.0
    return Poly(1, {(0,): c0 * one, (1,): c1 * one, (2,): -a0 * one / 2, (3,): -a1 * one / 6})


def solve_extremal_1d(P: DelzantPolytope, A) -> SymplecticPotential:
    """The admissible solution of (1/u'')'' = −A on an interval.

    The four boundary conditions force q to be the quadratic
    (x − α)(β − x)/(β − α), whose reciprocal is the Guillemin second derivative;
    the solution is therefore u_G (up to affine gauge).
    """
    q = extremal_profile_1d(P, A)
    alpha, beta = float(P.vertices[0][0]), float(P.vertices[-1][0])
    xs = np.linspace(alpha, beta, 2001)[1:-1]
    qv = q.evaluate(xs[:, None])
    if np.any(qv <= 0):
        raise NonpositiveQ(f"q ≤ 0 at x = {xs[np.argmin(qv)]:.6g}")
    # 1/q − u_G'' as a polynomial remainder: zero when q is the Guillemin quadratic
    ref = Poly(1, {(0,): -alpha * beta, (1,): alpha + beta, (2,): -1})
    scale = Fraction(1) / (P.vertices[-1][0] - P.vertices[0][0]) if isinstance(q.terms.get((2,)), Fraction) \
        else 1.0 / (beta - alpha)
    diff = {e: q.terms.get(e, 0) - ref.terms.get(e, 0) * scale for e in set(q.terms) | set(ref.terms)}
    if any(abs(float(v)) > 1e-12 for v in diff.values()):
        raise NonpositiveQ("profile is not the Guillemin quadratic")
    return guillemin_potential(P)


# ------------------------------------------------------------------ Ritz space

def degree_for_grid(nodes: int) -> int:
    """Polynomial degree matched to a grid with the given nodes per axis."""
    return max(2, (nodes - 1) // 4)


class RitzSpace:
    """Chebyshev corrections of total degree 2..degree with quadrature data."""

    def __init__(self, P: DelzantPolytope, degree: int, grid_nodes: int, quad_degree: int | None = None,
                 min_degree: int = 2):
        self.P = P
        V = P.vertex_array
        lo, hi = V.min(axis=0), V.max(axis=0)
        self.basis = ChebyshevBasis(lo, hi, degree, min_degree=min_degree)
        self.degree = degree
        scheme = build_quadrature(P, quad_degree or 2 * degree + 12)
        self.X, self.w = scheme.points, scheme.weights
        self.scheme = scheme
        self.HG = guillemin_derivatives(P, self.X, 2)[2]
        self.logdetHG = _logdet(self.HG)
        d = self.basis.design(self.X, 2)
        n = P.dim
        self.B0 = d[(0,) * n]
        self.B1 = np.stack([d[tuple(int(i == j) for i in range(n))] for j in range(n)], axis=-1)
        self.B2 = _second(d, n)                                      # (N, m, n, n)
        self.grid = grid_template(P, grid_nodes)
        self.grid_x = self.grid.interior_points()
        g = self.basis.design(self.grid_x, 2)
        self.G0 = g[(0,) * n]
        self.G2 = _second(g, n)
        self.HG_grid = guillemin_derivatives(P, self.grid_x, 2)[2]

    @property
    def size(self) -> int:
        return len(self.basis)

    def correction(self, c) -> ChebyshevFunction:
        return self.basis.function(c)

    def potential(self, c) -> SymplecticPotential:
        return SymplecticPotential(self.P, self.correction(c))

    def lift(self, c, other: "RitzSpace") -> np.ndarray:
        """Coefficients of the same correction in a larger space."""
        pos = {e: i for i, e in enumerate(other.basis.indices)}
        out = np.zeros(other.size)
        for e, v in zip(self.basis.indices, c):
            out[pos[e]] = v
        return out


def _second(design: dict, n: int) -> np.ndarray:
    N, m = design[(0,) * n].shape
    out = np.empty((N, m, n, n))
    for i in range(n):
        for j in range(n):
            cnt = [0] * n
            cnt[i] += 1
            cnt[j] += 1
            out[:, :, i, j] = design[tuple(cnt)]
    return out


def _pd(H) -> bool:
    if not np.all(np.isfinite(H)):
        return False
    try:
        np.linalg.cholesky(H)
        return True
    except np.linalg.LinAlgError:
        return False


# ------------------------------------------------------------------ F_A Newton

@dataclass
class _State:
    c: np.ndarray
    F: float
    U: np.ndarray


class _FAProblem:
    """F̃(c) = −∫ log det(I + U_G ∇²v) + L_A(v), equal to F_A(u_G + v) up to a constant."""

    def __init__(self, space: RitzSpace, A):
        self.S = space
        self.A = A
        fa = _as_callable(A)
        sc = space.scheme
        bnd = sum(np.tensordot(w, space.basis.design(p, 0)[(0,) * space.P.dim], axes=(0, 0))
                  for p, w in zip(sc.boundary_points, sc.boundary_weights))
        inner = (space.w * np.asarray(fa(space.X), dtype=float)) @ space.B0
        self.ell = bnd - inner
        self.A_grid = np.asarray(fa(space.grid_x), dtype=float)

    def hessian_field(self, c, where="quad"):
        S = self.S
        if where == "quad":
            return S.HG + np.einsum("nmij,m->nij", S.B2, c)
        return S.HG_grid + np.einsum("nmij,m->nij", S.G2, c)

    def value(self, c):
        H = self.hessian_field(c)
        if not _pd(H) or not _pd(self.hessian_field(c, "grid")):
            return np.inf, None
        return float(-self.S.w @ (_logdet(H) - self.S.logdetHG) + self.ell @ c), np.linalg.inv(H)

    def gradient_hessian(self, U):
        S = self.S
        M = np.einsum("nij,nmjk->nmik", U, S.B2)                      # U ∇²B_k
        grad = -np.einsum("n,nmii->m", S.w, M) + self.ell
        flat = M * np.sqrt(S.w)[:, None, None, None]
        hess = np.einsum("nkij,nlji->kl", flat, flat, optimize=True)
        return grad, (hess + hess.T) / 2

    def residual(self, c) -> float:
        u = self.S.potential(c)
        return float(np.max(np.abs(abreu_scalar(u, self.S.grid_x) - self.A_grid)))

    def norm(self, c) -> float:
        return float(np.max(np.abs(self.S.G0 @ c))) if len(c) else 0.0


def _newton_step(prob: _FAProblem, state: _State, trust: float):
    grad, hess = prob.gradient_hessian(state.U)
    try:
        step = -np.linalg.solve(hess, grad)
    except np.linalg.LinAlgError:
        step = -np.linalg.lstsq(hess, grad, rcond=None)[0]
    decrement = float(-grad @ step)
    size = prob.norm(step)
    if size > trust:
        step *= trust / size
    alpha = 1.0
    while alpha > 1e-10:
        cand = state.c + alpha * step
        F, U = prob.value(cand)
        if np.isfinite(F) and F <= state.F + 1e-4 * alpha * (grad @ step):
            return _State(cand, F, U), decrement, float(np.linalg.norm(grad))
        alpha *= 0.5
    return None, decrement, float(np.linalg.norm(grad))


def _stalled(residuals, window) -> bool:
    """Best residual in the last window improves on the earlier best by < 0.1%."""
    return min(residuals[-window:]) >= (1 - 1e-3) * min(residuals[:-window])


def fit_two_piece(X: np.ndarray, values: np.ndarray, starts: int = 12) -> PLConvexFunction:
    """Least-squares fit of max(ℓ₁, ℓ₂) to values by alternating partitions."""
    X = np.atleast_2d(X)
    n = X.shape[1]
    Y = np.hstack([X, np.ones((len(X), 1))])
    center = X.mean(axis=0)
    best = None
    for j in range(starts):
        ang = np.pi * j / starts
        d = np.array([np.cos(ang), np.sin(ang)])[:n] if n > 1 else np.array([1.0])
        side = (X - center) @ d > 0
        for _ in range(50):
            if side.all() or (~side).all():
                break
            p1 = np.linalg.lstsq(Y[side], values[side], rcond=None)[0]
            p2 = np.linalg.lstsq(Y[~side], values[~side], rcond=None)[0]
            new = Y @ p1 >= Y @ p2
            if np.array_equal(new, side):
                break
            side = new
        if side.all() or (~side).all():
            p1 = p2 = np.linalg.lstsq(Y, values, rcond=None)[0]
        err = float(np.sum((np.maximum(Y @ p1, Y @ p2) - values) ** 2))
        if best is None or err < best[0]:
            best = (err, p1, p2)
    _, p1, p2 = best
    return PLConvexFunction(((tuple(p1[:n]), float(p1[n])), (tuple(p2[:n]), float(p2[n]))))


def witness_L_A(P: DelzantPolytope, A, witness: PLConvexFunction) -> float:
    """L_A of a two-piece witness: max(ℓ₁, ℓ₂) = ℓ₂ + max(ℓ₁ − ℓ₂, 0) and L_A kills ℓ₂."""
    (a1, c1), (a2, c2) = witness.pieces[:2]
    coeffs = [Fraction(float(p)) - Fraction(float(q)) for p, q in zip(a1, a2)]
    coeffs.append(Fraction(float(c1)) - Fraction(float(c2)))
    return float(crease_value(P, A, coeffs)[0])


def crease_angle(f: PLConvexFunction, g: PLConvexFunction) -> float:
    """Angle in degrees between the creases of two single-crease functions."""
    a, b = f.crease_direction(), g.crease_direction()
    if a is None or b is None:
        return 90.0
    return float(np.degrees(np.arccos(min(1.0, abs(float(a @ b))))))


def gauge_fixed(u: SymplecticPotential, point) -> SymplecticPotential:
    """u minus the affine function that makes Du(point) = 0 and leaves u(point) unchanged."""
    p = np.atleast_2d(np.asarray(point, dtype=float))
    g = u.gradient(p)[0]
    const = float(g @ p[0])
    return u.with_correction(AffineFunction(const, tuple(-g)))


def _check_balanced(P, A):
    """L_A must vanish on affine functions for F_A to be bounded on the gauge."""
    pa = _as_exact(A, P.dim)
    worst = 0.0
    for f in [Poly.constant(P.dim, 1)] + [Poly.variable(P.dim, i) for i in range(P.dim)]:
        val = L_A(P, pa, f) if pa is not None else L_A(P, A, f, default_scheme(P, 30))
        worst = max(worst, abs(float(val)))
    return worst


def solve_prescribed_2d(P: DelzantPolytope, A, grid: int = 33, tol: float = 1e-4, max_iter: int = 200,
                        degree: int | None = None, max_degree: int = 20, adapt: bool = True,
                        collapse_factor: float = 50.0, collapse_window: int = 50,
                        trust: float | None = None, initial=None) -> SolveReport:
    """Newton minimization of F_A over Chebyshev corrections, residual S(u) − A on the grid.

    Each accepted step keeps ∇²u positive definite at every quadrature and grid
    node. When Newton has converged in the current space but the grid residual
    is above tol, the degree is raised (adapt=True) up to max_degree.
    Collapse: ‖v‖∞ > collapse_factor·diam(P) while the residual improved by
    less than 1e-3 (relative) over the last collapse_window iterations; the
    witness is the best two-piece max-affine fit to v/‖v‖∞.
    """
    if P.dim != 2:
        raise ValidationError("solve_prescribed_2d needs a polygon")
    imbalance = _check_balanced(P, A)
    if imbalance > 1e-8:
        warnings.warn(f"L_A does not vanish on affine functions (max {imbalance:.3e}); F_A is unbounded")
    degree = degree or degree_for_grid(grid)
    space = RitzSpace(P, degree, grid)
    prob = _FAProblem(space, A)
    c = np.zeros(space.size) if initial is None else space.lift(*initial) if isinstance(initial, tuple) \
        else np.asarray(initial, dtype=float)
    F, U = prob.value(c)
    if U is None:
        raise SingularHessian(None, "initial potential is not convex at the nodes")
    state = _State(c, F, U)
    diam = P.diameter
    trust = trust or 10 * diam
    residuals = [prob.residual(state.c)]
    norms = [prob.norm(state.c)]
    status = STALLED
    witness = None
    it = 0
    while it < max_iter:
        if residuals[-1] <= tol:
            status = CONVERGED
            break
        new, decrement, gnorm = _newton_step(prob, state, trust)
        it += 1
        stalled_newton = new is None or decrement <= 1e-14 * max(1.0, abs(state.F)) or gnorm <= 1e-12
        if new is not None:
            state = new
            residuals.append(prob.residual(state.c))
            norms.append(prob.norm(state.c))
        if norms[-1] > collapse_factor * diam and len(residuals) > collapse_window:
            if _stalled(residuals, collapse_window):
                status = COLLAPSE
                vg = space.G0 @ state.c
                witness = fit_two_piece(space.grid_x, vg / np.max(np.abs(vg)))
                break
        if residuals[-1] <= tol:
            status = CONVERGED
            break
        if stalled_newton:
            if adapt and space.degree < max_degree:
                bigger = RitzSpace(P, min(space.degree + 4, max_degree), grid)
                c = space.lift(state.c, bigger)
                space, prob = bigger, _FAProblem(bigger, A)
                F, U = prob.value(c)
                if U is None:
                    break
                state = _State(c, F, U)
                continue
            break
    u = space.potential(state.c)
    return SolveReport(u, residuals, it, status, witness, tol, space.degree, norms,
                       {"affine_imbalance": imbalance})


@dataclass
class ProbeCheckpoint:
    step: int
    norm: float
    residual: float
    functional: float
    fit: PLConvexFunction | None

    def to_json(self):
        return {"step": self.step, "norm": self.norm, "residual": self.residual,
                "functional": self.functional, "fit": None if self.fit is None else self.fit.to_json(),
                "crease_normal": None if self.fit is None or self.fit.crease_direction() is None
                else self.fit.crease_direction().tolist()}


@dataclass
class ProbeTrajectory:
    checkpoints: list
    status: str

    @property
    def final_fit(self) -> PLConvexFunction | None:
        return self.checkpoints[-1].fit if self.checkpoints else None

    def to_json(self):
        return {"status": self.status, "checkpoints": [c.to_json() for c in self.checkpoints]}


def minimizing_sequence_probe(P: DelzantPolytope, A, steps: int, grid: int = 33, degree: int = 12,
                              every: int = 5, collapse_factor: float = 50.0,
                              collapse_window: int = 50) -> ProbeTrajectory:
    """Descend F_A for a fixed number of damped Newton steps, recording ‖v‖∞ and the
    best two-piece max-affine fit to v/‖v‖∞ at every ``every``-th step."""
    if steps <= 0:
        return ProbeTrajectory([], "Empty")
    space = RitzSpace(P, degree, grid)
    prob = _FAProblem(space, A)
    c = np.zeros(space.size)
    F, U = prob.value(c)
    state = _State(c, F, U)
    diam = P.diameter
    residuals, norms, points = [prob.residual(c)], [0.0], []
    for k in range(1, steps + 1):
        new, _, _ = _newton_step(prob, state, 10 * diam)
        if new is not None:
            state = new
        residuals.append(prob.residual(state.c))
        norms.append(prob.norm(state.c))
        if k % every == 0 or k == steps:
            vg = space.G0 @ state.c
            fit = fit_two_piece(space.grid_x, vg / np.max(np.abs(vg))) if np.any(vg) else None
            points.append(ProbeCheckpoint(k, norms[-1], residuals[-1], state.F, fit))
    status = "Bounded"
    if norms[-1] > collapse_factor * diam:
        status = "Growing"
        if len(residuals) > collapse_window:
            if _stalled(residuals, collapse_window):
                status = COLLAPSE
    return ProbeTrajectory(points, status)


# ------------------------------------------------------------------ soliton

def solve_soliton_2d(fano: FanoPolytope, grid: int = 33, tol: float = 1e-4, max_iter: int = 50,
                     degree: int | None = None, max_degree: int = 20, adapt: bool = True,
                     A: Callable | None = None) -> SolveReport:
    """Gauss–Newton for ρ(u) = A + a₀ + γ·x in centered coordinates.

    Unknowns: Chebyshev correction (degree ≥ 2), the constant a₀, and γ. Linear
    terms do not change ρ and are fixed by the gauge Du(ν₀) = 0. Jacobian
    columns are □B_k, −1 and −x_i. With A = 0 the recovered γ equals the
    soliton constants c.
    """
    Pc = fano.centered
    if Pc.dim != 2:
        raise ValidationError("solve_soliton_2d needs a polygon")
    fa = (lambda X: np.zeros(len(np.atleast_2d(X)))) if A is None else _as_callable(A)
    degree = degree or degree_for_grid(grid)
    space = RitzSpace(Pc, degree, grid)
    c = np.zeros(space.size)
    a0, gamma = 0.0, np.zeros(2)
    residuals, norms = [], []
    it = 0
    status = STALLED
    sqw = np.sqrt(space.w)

    def rho_at(space, c, X, H):
        u = space.potential(c)
        f, g = u.derivatives(X, 1)[:2]
        return _logdet(H) - (np.sum(X * g, axis=1) - f)

    def grid_residual(space, c, a0, gamma):
        H = space.HG_grid + np.einsum("nmij,m->nij", space.G2, c)
        X = space.grid_x
        return float(np.max(np.abs(rho_at(space, c, X, H) - fa(X) - a0 - X @ gamma)))

    def lsq_residual(space, c, a0, gamma):
        H = space.HG + np.einsum("nmij,m->nij", space.B2, c)
        if not _pd(H) or not _pd(space.HG_grid + np.einsum("nmij,m->nij", space.G2, c)):
            return None, None
        X = space.X
        r = rho_at(space, c, X, H) - fa(X) - a0 - X @ gamma
        return r, H

    r, H = lsq_residual(space, c, a0, gamma)
    residuals.append(grid_residual(space, c, a0, gamma))
    norms.append(0.0)
    while it < max_iter:
        if residuals[-1] <= tol:
            status = CONVERGED
            break
        U = np.linalg.inv(H)
        X = space.X
        box = (np.einsum("nij,nmij->nm", U, space.B2) - np.einsum("ni,nmi->nm", X, space.B1) + space.B0)
        J = np.hstack([box, -np.ones((len(X), 1)), -X])
        Jw = J * sqw[:, None]
        sol, _, rank, sv = np.linalg.lstsq(Jw, -r * sqw, rcond=None)
        if rank < J.shape[1]:
            raise LinearSolveFailure(f"linearized operator has rank {rank} < {J.shape[1]}")
        it += 1
        alpha, accepted = 1.0, False
        base = float(np.sum(space.w * r ** 2))
        while alpha > 1e-8:
            cn = c + alpha * sol[:space.size]
            an = a0 + alpha * sol[space.size]
            gn = gamma + alpha * sol[space.size + 1:]
            rn, Hn = lsq_residual(space, cn, an, gn)
            if rn is not None and float(np.sum(space.w * rn ** 2)) < base:
                c, a0, gamma, r, H = cn, an, gn, rn, Hn
                accepted = True
                break
            alpha *= 0.5
        if accepted:
            residuals.append(grid_residual(space, c, a0, gamma))
            norms.append(float(np.max(np.abs(space.G0 @ c))))
        small_step = not accepted or np.max(np.abs(alpha * sol)) < 1e-13
        if residuals[-1] <= tol:
            status = CONVERGED
            break
        if small_step:
            if adapt and space.degree < max_degree:
                bigger = RitzSpace(Pc, min(space.degree + 4, max_degree), grid)
                c = space.lift(c, bigger)
                space = bigger
                sqw = np.sqrt(space.w)
                r, H = lsq_residual(space, c, a0, gamma)
                if r is None:
                    break
                continue
            break
    u = gauge_fixed(space.potential(c), np.zeros(2))
    c_ref = soliton_constants(fano).c
    return SolveReport(u, residuals, it, status, None, tol, space.degree, norms,
                       {"gamma": gamma, "constant": a0, "soliton_constants": c_ref,
                        "gamma_drift": float(np.max(np.abs(gamma - c_ref)))})


def solution_gap(u: SymplecticPotential, reference: SymplecticPotential, X, point=None) -> float:
    """Max |u − reference| at X after fixing the affine gauge at ``point``."""
    P = u.polytope
    point = point if point is not None else [float(c) for c in barycenter(P)]
    a = gauge_fixed(u, point)
    b = gauge_fixed(reference, point)
    p = np.atleast_2d(point)
    da = a.value(X) - a.value(p)[0]
    db = b.value(X) - b.value(p)[0]
    return float(np.max(np.abs(da - db)))
