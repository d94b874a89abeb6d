"""Kähler–Ricci soliton algebra on Fano polytopes.

All quantities here use coordinates centered at the Fano point ν₀, so that
h = x·Du − u and □f = u^{ij}f_ij − x^i f_i + f are canonical. Potentials
given on the uncentered polytope are translated first (``centered_potential``).
Integrals with weight e^ρ are computed either in the dual space, where
∫_P g e^ρ dx = ∫ g(∇φ) e^{−φ} dt, or on the polytope with a Gauss fan rule.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .dual import DEFAULT_CUT, dual_nodes
from .errors import NonConvergence, SingularHessian, ValidationError
from .functions import (AffineFunction, GaussianBump, ShiftedFunction, SmoothFunction,
                        SumFunction, monomials_up_to)
from .polytope import FanoPolytope, build_quadrature
from .potential import SymplecticPotential, boundary_samples, interior_samples

IDENTITY_TOL = 1e-7


@dataclass(frozen=True)
class SolitonData:
    fano: FanoPolytope
    c: np.ndarray
    gamma: np.ndarray
    A: Callable

    def target(self, X):
        """ρ target A + γ·x at centered points X."""
        X = np.atleast_2d(X)
        return np.asarray(self.A(X), dtype=float) + X @ self.gamma


def centered_potential(u: SymplecticPotential, fano: FanoPolytope) -> SymplecticPotential:
    """The same potential written in coordinates with ν₀ at the origin."""
    Pc = fano.centered
    if u.polytope is Pc or u.polytope.facets == Pc.facets:
        return u
    if u.polytope.facets != fano.base.facets:
        raise ValidationError("potential is not defined on this Fano polytope")
    shift = tuple(float(c) for c in fano.center)
    return SymplecticPotential(Pc, ShiftedFunction(u.correction, shift), u.reference)


def _logdet(H: np.ndarray) -> np.ndarray:
    """log det of SPD matrices after symmetric diagonal scaling (graded near ∂P)."""
    d = np.sqrt(np.einsum("nii->ni", H))
    sign, val = np.linalg.slogdet(H / (d[:, :, None] * d[:, None, :]))
    if np.any(sign <= 0):
        raise SingularHessian(None)
    return val + 2 * np.sum(np.log(d), axis=1)


def h_and_rho(u: SymplecticPotential, fano: FanoPolytope, X):
    """(h, L, ρ) at centered interior points X, with L = log det ∇²u and ρ = L − h."""
    u = centered_potential(u, fano)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    f, g, H = u.derivatives(X, 2)
    h = np.sum(X * g, axis=1) - f
    L = _logdet(H)
    return h, L, L - h


def rho_boundary_spread(u: SymplecticPotential, fano: FanoPolytope, per_facet: int = 7,
                        depths: Sequence[float] = (1e-3, 1e-5, 1e-7)) -> float:
    """Largest change of ρ along inward normals as the depth shrinks.

    Small values indicate that ρ extends continuously to the closed polytope.
    """
    u = centered_potential(u, fano)
    P = u.polytope
    B, facet_index = boundary_samples(P, per_facet)
    spread = 0.0
    for b, r in zip(B, facet_index):
        inward = P.normals[r].astype(float)
        inward = inward / np.linalg.norm(inward)
        pts = b + np.outer(depths, inward)
        ok = P.contains(pts)
        if ok.sum() < 2:
            continue
        rho = h_and_rho(u, fano, pts[ok])[2]
        spread = max(spread, float(np.ptp(rho)))
    return spread


# ------------------------------------------------------------ soliton constants

@dataclass(frozen=True)
class SolitonConstants:
    c: np.ndarray
    grad_norm: float
    iterations: int

    def to_json(self):
        return {"c": self.c.tolist(), "gradF_norm": self.grad_norm, "iterations": self.iterations}


def soliton_constants(fano: FanoPolytope, tol: float = 1e-10, max_iter: int = 100,
                      degree: int = 40) -> SolitonConstants:
    """Critical point of F(c) = ∫_P e^{c·x} dx over the centered polytope."""
    P = fano.centered
    scheme = build_quadrature(P, degree)
    X, w = scheme.points, scheme.weights

    def parts(c):
        e = w * np.exp(X @ c)
        return e.sum(), X.T @ e, (X.T * e) @ X

    c = np.zeros(P.dim)
    F, g, H = parts(c)
    for it in range(max_iter + 1):
        if np.linalg.norm(g) <= tol:
            return SolitonConstants(c, float(np.linalg.norm(g)), it)
        step = -np.linalg.solve(H, g)
        alpha = 1.0
        while alpha > 1e-12:
            cand = c + alpha * step
            Fc, gc, Hc = parts(cand)
            if Fc <= F + 1e-4 * alpha * g @ step or np.linalg.norm(gc) < np.linalg.norm(g):
                break
            alpha *= 0.5
        c, F, g, H = cand, Fc, gc, Hc
    raise NonConvergence(f"soliton constants: gradient {np.linalg.norm(g):.3e} after {max_iter} steps")


def soliton_data(fano: FanoPolytope, A: Callable | None = None, tol: float = 1e-10) -> SolitonData:
    c = soliton_constants(fano, tol).c
    if A is None:
        return SolitonData(fano, c, np.zeros_like(c), lambda X: np.atleast_2d(X) @ c)
    return SolitonData(fano, c, np.zeros_like(c), A)


# ------------------------------------------------------------ □ and the forms

def box_operator(u: SymplecticPotential, f: SmoothFunction, X, fano: FanoPolytope | None = None):
    """□f = u^{ij}f_ij − x^i f_i + f at centered points X."""
    if fano is not None:
        u = centered_potential(u, fano)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    H = u.hessian(X)
    try:
        np.linalg.cholesky(H)
    except np.linalg.LinAlgError:
        raise SingularHessian(X[int(np.argmin(np.linalg.eigvalsh(H)[:, 0]))].tolist()) from None
    U = np.linalg.inv(H)
    f0, f1, f2 = f.derivatives(X, 2)
    return np.einsum("nij,nij->n", U, f2) - np.sum(X * f1, axis=1) + f0


@dataclass
class WeightedInner:
    """The forms ⟨f,g⟩_u, ⟨∇f,∇g⟩_u, ⟨∇²f,∇²g⟩_u with weight e^ρ.

    route="dual" samples the dual lattice; route="primal" uses a Gauss fan rule
    on P weighted by e^ρ. Node data is built once; queries are pure.
    """

    potential: SymplecticPotential
    route: str = "dual"
    x: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)
    grad_u: np.ndarray = field(init=False, repr=False)
    U: np.ndarray = field(init=False, repr=False)
    dU: np.ndarray = field(init=False, repr=False)
    spacing: float | None = None
    cut: float = DEFAULT_CUT
    degree: int = 22
    levels: int = 12

    def __post_init__(self):
        u = self.potential
        n = u.dim
        if self.route == "dual":
            nodes = dual_nodes(u, np.zeros(n), 1.0, self.spacing, self.cut)
            self.x = nodes.x
            self.weights = nodes.weights * np.exp(nodes.log_scale)
            self.grad_u = nodes.t
        elif self.route == "primal":
            # graded toward ∂P: u_i has logarithmic growth there
            scheme = build_quadrature(u.polytope, self.degree, graded=True, levels=self.levels)
            self.x = scheme.points
            f, g, H = u.derivatives(self.x, 2)
            rho = _logdet(H) - (np.sum(self.x * g, axis=1) - f)
            self.weights = scheme.weights * np.exp(rho)
            self.grad_u = g
        else:
            raise ValueError(f"unknown route {self.route!r}")
        _, _, H, T3 = u.derivatives(self.x, 3)
        self.U = np.linalg.inv(H)
        self.dU = -np.einsum("nia,nkab,nbj->nkij", self.U, T3, self.U)

    def _jet(self, f: SmoothFunction, order: int):
        return f.derivatives(self.x, order)

    def integrate(self, values) -> float:
        return float(np.tensordot(self.weights, values, axes=(0, 0)))

    def mass(self) -> float:
        return float(self.weights.sum())

    def inner(self, f, g) -> float:
        return self.integrate(self._jet(f, 0)[0] * self._jet(g, 0)[0])

    def grad_inner(self, f, g) -> float:
        df, dg = self._jet(f, 1)[1], self._jet(g, 1)[1]
        return self.integrate(np.einsum("ni,nij,nj->n", df, self.U, dg))

    def hess_inner(self, f, g) -> float:
        Df, Dg = self._jet(f, 2)[2], self._jet(g, 2)[2]
        return self.integrate(np.einsum("nij,nab,nia,njb->n", Df, Dg, self.U, self.U, optimize=True))

    def box(self, f) -> np.ndarray:
        f0, f1, f2 = self._jet(f, 2)
        return np.einsum("nij,nij->n", self.U, f2) - np.sum(self.x * f1, axis=1) + f0

    def grad_box(self, f) -> np.ndarray:
        _, _, f2, f3 = self._jet(f, 3)
        return (np.einsum("nkij,nij->nk", self.dU, f2) + np.einsum("nij,nijk->nk", self.U, f3)
                - np.einsum("ni,nik->nk", self.x, f2))

    def values(self, f) -> np.ndarray:
        return self._jet(f, 0)[0]


def weighted_forms(u: SymplecticPotential, fano: FanoPolytope, route: str = "dual",
                   **options) -> WeightedInner:
    return WeightedInner(centered_potential(u, fano), route, **options)


def functional_Fcal(u: SymplecticPotential, fano: FanoPolytope, route: str = "dual") -> float:
    """𝓕(u) = ∫_P e^ρ dx."""
    return weighted_forms(u, fano, route).mass()


def Fcal_variation_check(u: SymplecticPotential, fano: FanoPolytope, f: SmoothFunction,
                         eps: float = 1e-3, route: str = "dual") -> tuple[float, float]:
    """(central difference of 𝓕 along u + s f at s = 0, ⟨f,1⟩_u)."""
    uc = centered_potential(u, fano)
    plus = functional_Fcal(uc.with_correction(f.scaled(eps)), fano, route)
    minus = functional_Fcal(uc.with_correction(f.scaled(-eps)), fano, route)
    W = weighted_forms(uc, fano, route)
    return (plus - minus) / (2 * eps), W.integrate(W.values(f))


def log_Fcal_second_difference(u: SymplecticPotential, fano: FanoPolytope, f: SmoothFunction,
                               s: float = 0.0, step: float = 0.1, route: str = "dual") -> float:
    """Second difference of −log 𝓕 along u + s f (non-negative by convexity)."""
    uc = centered_potential(u, fano)
    vals = [-np.log(functional_Fcal(uc.with_correction(f.scaled(s + d)), fano, route))
            for d in (-step, 0.0, step)]
    return (vals[0] - 2 * vals[1] + vals[2]) / step ** 2


# ------------------------------------------------------------ identity suite

@dataclass(frozen=True)
class IdentityCheck:
    name: str
    lhs: float
    rhs: float
    gap: float
    scale: float
    passed: bool
    witness: str = ""

    @property
    def relative_gap(self) -> float:
        return self.gap / self.scale if self.scale > 0 else self.gap

    def to_json(self):
        return {"name": self.name, "lhs": self.lhs, "rhs": self.rhs, "gap": self.gap,
                "relative_gap": self.relative_gap, "passed": self.passed, "witness": self.witness}


@dataclass(frozen=True)
class IdentityReport:
    checks: list
    route: str

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def max_relative_gap(self) -> float:
        return max((c.relative_gap for c in self.checks if c.name != "cauchy_schwarz"), default=0.0)

    @property
    def cauchy_schwarz_margin(self) -> float:
        """Smallest relative value of ⟨1,f⟩² − ⟨1,1⟩⟨f,□f⟩ over the test set."""
        return self.check("cauchy_schwarz").relative_gap

    def check(self, name: str) -> IdentityCheck:
        return next(c for c in self.checks if c.name == name)

    def to_json(self):
        return {"passed": self.passed, "route": self.route, "max_relative_gap": self.max_relative_gap,
                "checks": [c.to_json() for c in self.checks]}


def random_bumps(P, count: int, seed: int, per_combination: int = 3) -> list[SmoothFunction]:
    """Seeded sums of Gaussian bumps centered inside P."""
    rng = np.random.default_rng(seed)
    pool = interior_samples(P, 8, margin=0.1)
    width0 = P.diameter / 4
    out = []
    for _ in range(count):
        terms = tuple(GaussianBump(tuple(pool[rng.integers(len(pool))]), width0 * rng.uniform(0.5, 1.5),
                                   rng.normal()) for _ in range(per_combination))
        out.append(SumFunction(terms))
    return out


def _monomial_label(f) -> str:
    (exps,) = f.poly.terms
    parts = [f"x{i}^{e}" if e > 1 else f"x{i}" for i, e in enumerate(exps) if e]
    return "*".join(parts) or "1"


def default_test_functions(P, degree: int = 4, bumps: int = 10, seed: int = 0):
    funcs = [(_monomial_label(f), f) for f in monomials_up_to(P.dim, degree)]
    funcs += [(f"bump{j}", b) for j, b in enumerate(random_bumps(P, bumps, seed))]
    return funcs


def _worst(name, rows, tol):
    lhs, rhs, scale, label = max(rows, key=lambda r: abs(r[0] - r[1]) / r[2] if r[2] > 0 else abs(r[0] - r[1]))
    gap = abs(lhs - rhs)
    rel = gap / scale if scale > 0 else gap
    return IdentityCheck(name, float(lhs), float(rhs), float(gap), float(scale), bool(rel <= tol), label)


def identity_suite(u: SymplecticPotential, fano: FanoPolytope, functions=None, route: str = "dual",
                   tol: float = IDENTITY_TOL, seed: int = 0, bumps: int = 10,
                   forms: WeightedInner | None = None) -> IdentityReport:
    """Numerical checks of the □ identities for an admissible potential.

    ``functions`` is a list of (label, SmoothFunction) in centered coordinates;
    the default is all monomials of degree ≤ 4 plus seeded bump combinations.
    Each check keeps its worst case; pass iff gap ≤ tol × operand magnitude.
    """
    uc = centered_potential(u, fano)
    P = uc.polytope
    n = P.dim
    W = forms or WeightedInner(uc, route)
    if functions is None:
        functions = default_test_functions(P, 4, bumps, seed)
    labels = [lab for lab, _ in functions]
    fs = [f for _, f in functions]

    vals = np.array([W.values(f) for f in fs])                     # (m, N)
    boxes = np.array([W.box(f) for f in fs])
    grads = np.array([f.derivatives(W.x, 1)[1] for f in fs])       # (m, N, n)
    hessians = np.array([f.derivatives(W.x, 2)[2] for f in fs])
    w = W.weights
    G0 = (vals * w) @ vals.T
    Ggrad = np.einsum("anI,nIJ,bnJ,n->ab", grads, W.U, grads, w, optimize=True)
    Gbox = (boxes * w) @ vals.T                                    # ⟨□f_a, f_b⟩
    Ghess = np.einsum("mnij,nip,njq,mnpq,n->m", hessians, W.U, W.U, hessians, w, optimize=True)
    BB = np.einsum("an,an,n->a", boxes, boxes, w)
    fbox = np.einsum("an,an,n->a", vals, boxes, w)
    mass = w.sum()
    f1 = vals @ w
    # operand norms bound each pairing by Cauchy–Schwarz; gaps are measured against them
    nf, ngrad, nbox = np.sqrt(np.abs(np.diag(G0))), np.sqrt(np.abs(np.diag(Ggrad))), np.sqrt(BB)

    checks = []
    one = AffineFunction(1.0, (0.0,) * n)
    checks.append(_worst("box_one", [(float(np.max(np.abs(W.box(one) - 1))), 0.0, 1.0, "1")], 1e-9))
    rows = []
    for i in range(n):
        g = [0.0] * n
        g[i] = 1.0
        rows.append((float(np.max(np.abs(W.box(AffineFunction(0.0, tuple(g)))))), 0.0, 1.0, f"x{i}"))
    checks.append(_worst("box_linear", rows, 1e-9))

    scale = np.outer(nbox, nf) + np.outer(ngrad, ngrad) + np.outer(nf, nf)
    rows = [(Gbox[a, b], -Ggrad[a, b] + G0[a, b], scale[a, b], f"{labels[a]},{labels[b]}")
            for a in range(len(fs)) for b in range(len(fs))]
    checks.append(_worst("self_adjoint", rows, tol))

    scale = np.outer(nbox, nf) + np.outer(nf, nbox)
    rows = [(Gbox[a, b], Gbox[b, a], scale[a, b], f"{labels[a]},{labels[b]}")
            for a in range(len(fs)) for b in range(a + 1, len(fs))]
    checks.append(_worst("box_symmetry", rows, tol))

    rows = [(BB[a] - Ghess[a], fbox[a], BB[a] + Ghess[a] + nf[a] * nbox[a], labels[a])
            for a in range(len(fs))]
    checks.append(_worst("second_variation", rows, tol))

    rows = []
    for a, f in enumerate(fs):
        gb = W.grad_box(f)
        lhs = W.integrate(np.einsum("ni,nij,nj->n", grads[a], W.U, gb))
        ngb = np.sqrt(abs(W.integrate(np.einsum("ni,nij,nj->n", gb, W.U, gb))))
        rows.append((lhs, -Ghess[a], ngrad[a] * ngb + Ghess[a], labels[a]))
    checks.append(_worst("gradient_box", rows, tol))

    rows = []
    for i in range(n):
        lhs = W.integrate(W.grad_u[:, i] * W.x[:, i])
        rows.append((lhs, mass, abs(lhs) + mass, f"i={i}"))
    checks.append(_worst("gradient_moment_mass", rows, tol))

    # ⟨1,f⟩² − ⟨1,1⟩⟨f,□f⟩ ≥ 0, with equality for affine f
    worst = None
    for a in range(len(fs)):
        lhs, rhs = f1[a] ** 2, mass * fbox[a]
        scale = mass * (nf[a] ** 2 + nf[a] * nbox[a])
        affine = bool(np.allclose(hessians[a], 0))
        ok = bool(abs(lhs - rhs) <= tol * scale) if affine else bool(lhs - rhs >= -tol * scale)
        cand = IdentityCheck("cauchy_schwarz", float(lhs), float(rhs), float(lhs - rhs), float(scale), ok, labels[a])
        key = (ok, cand.relative_gap if affine else cand.relative_gap + 1.0)
        if worst is None or key < worst[0]:
            worst = (key, cand)
    checks.append(worst[1])
    return IdentityReport(checks, W.route)


def spectral_check(u: SymplecticPotential, fano: FanoPolytope, degree: int = 4,
                   forms: WeightedInner | None = None) -> np.ndarray:
    """Generalized eigenvalues of ⟨f,□f⟩ against ⟨f,f⟩ on polynomials of degree ≤ degree
    that are ⟨,⟩_u-orthogonal to the affine functions."""
    uc = centered_potential(u, fano)
    W = forms or WeightedInner(uc)
    n = uc.dim
    affine = monomials_up_to(n, 1)
    rest = monomials_up_to(n, degree, min_degree=2)
    w = W.weights
    Va = np.array([W.values(f) for f in affine])
    Vr = np.array([W.values(f) for f in rest])
    Ba = np.array([W.box(f) for f in affine])
    Br = np.array([W.box(f) for f in rest])
    Gaa = (Va * w) @ Va.T
    coef = np.linalg.solve(Gaa, (Va * w) @ Vr.T)                    # projection onto affine span
    V = Vr - coef.T @ Va
    B = Br - coef.T @ Ba
    M0 = (V * w) @ V.T
    Mb = (V * w) @ B.T
    Mb = (Mb + Mb.T) / 2
    from scipy.linalg import eigh
    return eigh(Mb, M0, eigvals_only=True)
