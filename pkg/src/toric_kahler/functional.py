"""Stability functionals: L_A, F_A, the Futaki invariant, the extremal affine
function, the weak form of the extremal equation, and a single-crease probe."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from itertools import combinations
from typing import Callable

import numpy as np

from .errors import QuadratureFailure, ValidationError
from .functions import SmoothFunction
from .polytope import (DelzantPolytope, QuadratureScheme, boundary_moment, boundary_volume,
                       build_quadrature, moment, volume)
from .potential import SymplecticPotential
from .rational import Poly, as_fraction, fraction_str, solve


@dataclass(frozen=True)
class AffineData:
    """A(x) = constant + gradient·x."""

    constant: object
    gradient: tuple

    def __post_init__(self):
        vals = [self.constant, *self.gradient]
        if not all(np.isfinite(float(v)) for v in vals):
            raise ValidationError("affine data must be finite")
        object.__setattr__(self, "gradient", tuple(self.gradient))

    @property
    def dim(self):
        return len(self.gradient)

    @property
    def is_rational(self) -> bool:
        return all(isinstance(v, (int, Fraction)) for v in (self.constant, *self.gradient))

    def as_poly(self) -> Poly:
        return Poly.affine([as_fraction(g) for g in self.gradient], as_fraction(self.constant))

    def __call__(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return float(self.constant) + X @ np.array([float(g) for g in self.gradient])

    def to_json(self):
        def enc(v):
            return fraction_str(v) if isinstance(v, (int, Fraction)) else float(v)
        return {"constant": enc(self.constant), "gradient": [enc(g) for g in self.gradient]}

    @classmethod
    def from_json(cls, data: dict, dim: int) -> "AffineData":
        def dec(v):
            return as_fraction(v) if isinstance(v, (str, int)) else float(v)
        grad = data.get("gradient", [0] * dim)
        if len(grad) != dim:
            raise ValidationError("gradient length does not match the polytope dimension")
        return cls(dec(data.get("constant", 0)), tuple(dec(g) for g in grad))


@dataclass(frozen=True)
class PLConvexFunction:
    """max over pieces of (vector·x + scalar)."""

    pieces: tuple

    def __post_init__(self):
        if not self.pieces:
            raise ValidationError("a PL convex function needs at least one piece")

    def __call__(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.max([X @ np.asarray(v, dtype=float) + float(c) for v, c in self.pieces], axis=0)

    def crease_direction(self) -> np.ndarray | None:
        """Unit normal of the crease between the first two pieces."""
        if len(self.pieces) < 2:
            return None
        d = np.asarray(self.pieces[0][0], dtype=float) - np.asarray(self.pieces[1][0], dtype=float)
        norm = np.linalg.norm(d)
        return d / norm if norm else None

    def to_json(self):
        return [{"vector": [float(a) for a in v], "scalar": float(c)} for v, c in self.pieces]


def _as_callable(A) -> Callable:
    if isinstance(A, (AffineData, SmoothFunction)):
        return A
    if isinstance(A, Poly):
        return A.evaluate
    if callable(A):
        return A
    value = float(A)
    return lambda X: np.full(len(np.atleast_2d(X)), value)


def _as_exact(obj, n) -> Poly | None:
    if isinstance(obj, Poly):
        return obj
    if isinstance(obj, AffineData) and obj.is_rational:
        return obj.as_poly()
    if isinstance(obj, (int, Fraction)) and not isinstance(obj, bool):
        return Poly.constant(n, Fraction(obj))
    return None


@lru_cache(maxsize=32)
def default_scheme(P: DelzantPolytope, degree: int = 24, graded: bool = False) -> QuadratureScheme:
    return build_quadrature(P, degree, graded=graded)


def L_A(P: DelzantPolytope, A, f, scheme: QuadratureScheme | None = None):
    """∫_{∂P} f dσ − ∫_P A f dx; exact (Fraction) when A and f are rational polynomials."""
    pa, pf = _as_exact(A, P.dim), _as_exact(f, P.dim)
    if pa is not None and pf is not None and scheme is None:
        return boundary_moment(P, pf) - moment(P, pa * pf)
    scheme = scheme or default_scheme(P)
    fa, ff = _as_callable(A), _as_callable(f)
    inner = scheme.integrate(lambda X: fa(X) * ff(X))
    return float(scheme.integrate_boundary(ff) - inner)


def constant_A(P: DelzantPolytope) -> Fraction:
    return boundary_volume(P) / volume(P)


def futaki(P: DelzantPolytope) -> tuple[Fraction, ...]:
    A = constant_A(P)
    return tuple(L_A(P, A, Poly.variable(P.dim, i)) for i in range(P.dim))


def extremal_affine(P: DelzantPolytope) -> AffineData:
    """The affine A with L_A(1) = L_A(x_i) = 0, solved exactly from moments."""
    n = P.dim
    basis = [Poly.constant(n, Fraction(1))] + [Poly.variable(n, i) for i in range(n)]
    gram = [[moment(P, p * q) for q in basis] for p in basis]
    rhs = [boundary_moment(P, p) for p in basis]
    coeffs = solve(gram, rhs)
    return AffineData(coeffs[0], tuple(coeffs[1:]))


def _logdet_integral(u: SymplecticPotential, scheme: QuadratureScheme) -> float:
    H = u.hessian(scheme.points)
    sign, logdet = np.linalg.slogdet(H)
    bad = (sign <= 0) | ~np.isfinite(logdet)
    if bad.any():
        x = scheme.points[np.argmax(bad)]
        facet = int(np.argmin(u.polytope.slacks(x[None])[0]))
        raise QuadratureFailure(facet, "log det ∇²u is not finite")
    return float(scheme.weights @ logdet)


def mabuchi_F_A(u: SymplecticPotential, A, scheme: QuadratureScheme | None = None) -> float:
    """F_A(u) = L_A(u) − ∫_P log det ∇²u dx on a graded rule.

    The graded fan rule is geometrically refined toward every facet, where the
    integrand carries the universal −log ℓ_r singularity.
    """
    P = u.polytope
    scheme = scheme or default_scheme(P, 22, graded=True)
    fa = _as_callable(A)
    boundary = scheme.integrate_boundary(u.value)
    inner = scheme.integrate(lambda X: fa(X) * u.value(X))
    return float(boundary - inner - _logdet_integral(u, scheme))


def weak_form_check(u: SymplecticPotential, A, f: SmoothFunction,
                    scheme: QuadratureScheme | None = None) -> tuple[float, float]:
    """(L_A(f), ∫ u^{ij} f_ij dx)."""
    P = u.polytope
    scheme = scheme or default_scheme(P)
    lhs = L_A(P, A, f, scheme)
    U = np.linalg.inv(u.hessian(scheme.points))
    fij = f.derivatives(scheme.points, 2)[2]
    rhs = float(scheme.weights @ np.einsum("nij,nij->n", U, fij))
    return float(lhs), rhs


# ------------------------------------------------------------- crease probe

def _clip_polygon(poly: list, ell) -> list:
    """Exact Sutherland-Hodgman clip of a convex polygon by ell(x) ≥ 0."""
    out = []
    m = len(poly)
    for i in range(m):
        p, q = poly[i], poly[(i + 1) % m]
        lp, lq = ell(p), ell(q)
        if lp >= 0:
            out.append(p)
        if (lp > 0 > lq) or (lp < 0 < lq):
            t = lp / (lp - lq)
            out.append(tuple(a + t * (b - a) for a, b in zip(p, q)))
    return out


def _crease_parts(P: DelzantPolytope, A: Poly, coeffs):
    """(L_A(max(0,ℓ)), ∫_P max(0,ℓ)) exactly for ℓ = coeffs·x + c, n ≤ 2."""
    *a, c = coeffs
    n = P.dim
    ell = Poly.affine(a, c)
    lin = lambda x: sum(ai * xi for ai, xi in zip(a, x)) + c
    if n == 1:
        lo, hi = P.vertices[0][0], P.vertices[-1][0]
        root = -c / a[0]
        seg = (max(lo, root), hi) if a[0] > 0 else (lo, min(hi, root))
        if seg[0] >= seg[1]:
            return Fraction(0), Fraction(0)
        bnd = sum(max(Fraction(0), lin((v,))) for v in (lo, hi))
        prod = A * ell
        inner = _interval_integral(prod, *seg)
        mass = _interval_integral(ell, *seg)
        return bnd - inner, mass
    region = _clip_polygon(list(P.ordered_vertices), lin)
    if len(region) < 3:
        return Fraction(0), Fraction(0)
    prod = A * ell
    inner = Fraction(0)
    mass = Fraction(0)
    affine_A = prod.degree() <= 2
    for i in range(1, len(region) - 1):
        tri = [region[0], region[i], region[i + 1]]
        area = abs((tri[1][0] - tri[0][0]) * (tri[2][1] - tri[0][1])
                   - (tri[1][1] - tri[0][1]) * (tri[2][0] - tri[0][0])) / 2
        if area == 0:
            continue
        centroid = tuple(sum(p[k] for p in tri) / 3 for k in range(2))
        mass += area * lin(centroid)
        if affine_A:
            mids = [tuple((tri[j][k] + tri[(j + 1) % 3][k]) / 2 for k in range(2)) for j in range(3)]
            inner += area * sum(prod(m) for m in mids) / 3
        else:
            from .rational import simplex_integral
            inner += simplex_integral(prod, tri, area)
    bnd = Fraction(0)
    for r, p, q in P.edges:
        lp, lq = lin(p), lin(q)
        if lp <= 0 and lq <= 0:
            continue
        length = _sigma_length(P.facets[r].normal, p, q)
        if lp >= 0 and lq >= 0:
            bnd += length * (lp + lq) / 2
        else:
            t = lp / (lp - lq)
            frac = t if lp > 0 else 1 - t
            bnd += length * frac * max(lp, lq) / 2
    return bnd - inner, mass


def _interval_integral(p: Poly, a, b) -> Fraction:
    total = Fraction(0)
    for (k,), c in p.terms.items():
        total += c * (Fraction(b) ** (k + 1) - Fraction(a) ** (k + 1)) / (k + 1)
    return total


def _sigma_length(normal, p, q) -> Fraction:
    d = [b - a for a, b in zip(p, q)]
    return abs(d[0] * normal[1] - d[1] * normal[0]) / (normal[0] ** 2 + normal[1] ** 2)


def crease_value(P: DelzantPolytope, A, coeffs) -> tuple[Fraction, Fraction]:
    """(L_A(max(0,ℓ)), ∫_P max(0,ℓ)) for ℓ(x) = coeffs[:-1]·x + coeffs[-1], exactly."""
    pa = _as_exact(A, P.dim)
    if pa is None:
        raise ValidationError("exact crease evaluation needs rational polynomial A")
    return _crease_parts(P, pa, [as_fraction(c) for c in coeffs])


@dataclass
class ProbeReport:
    value: float
    exact_value: Fraction | None
    crease: tuple | None          # ℓ coefficients (a..., c)
    crease_points: tuple | None   # two boundary points on the crease line
    certificate: str
    evaluated: int

    @property
    def function(self) -> PLConvexFunction | None:
        if self.crease is None:
            return None
        *a, c = self.crease
        return PLConvexFunction(((tuple(float(x) for x in a), float(c)),
                                 (tuple(0.0 for _ in a), 0.0)))

    def to_json(self):
        return {
            "value": self.value,
            "exact_value": None if self.exact_value is None else fraction_str(self.exact_value),
            "crease": None if self.crease is None else [fraction_str(c) for c in self.crease],
            "crease_points": None if self.crease_points is None else
            [[fraction_str(c) for c in p] for p in self.crease_points],
            "certificate": self.certificate,
            "evaluated": self.evaluated,
        }


def boundary_lattice_points(P: DelzantPolytope, m: int) -> list[tuple]:
    """Points p + (j/m)(q − p) along every edge (vertices once)."""
    if P.dim == 1:
        lo, hi = P.vertices[0][0], P.vertices[-1][0]
        return [(lo + Fraction(j, m) * (hi - lo),) for j in range(m + 1)]
    pts = []
    for _, p, q in P.edges:
        for j in range(m):
            pts.append(tuple(a + Fraction(j, m) * (b - a) for a, b in zip(p, q)))
    return pts


def crease_candidates(P: DelzantPolytope, budget: int) -> list[tuple[tuple, tuple, list]]:
    """Rational creases through pairs of boundary points, both orientations."""
    if P.dim == 1:
        m = max(2, budget // 2)
        pts = boundary_lattice_points(P, m)[1:-1]
        return [((p,), (p,), [s, -s * p[0]]) for p in pts for s in (Fraction(1), Fraction(-1))]
    nedges = len(P.edges)
    m = 1
    while True:
        npts = (m + 1) * nedges
        if npts * (npts - 1) > budget:
            break
        m += 1
    pts = boundary_lattice_points(P, m)
    on_facet = [{r for r, f in enumerate(P.facets) if f.slack(p) == 0} for p in pts]
    out = []
    for i, j in combinations(range(len(pts)), 2):
        if on_facet[i] & on_facet[j]:
            continue
        p, q = pts[i], pts[j]
        a = (p[1] - q[1], q[0] - p[0])
        c = -(a[0] * p[0] + a[1] * p[1])
        out.append((p, q, [a[0], a[1], c]))
        out.append((p, q, [-a[0], -a[1], -c]))
    return out


def stability_probe(P: DelzantPolytope, A, generator_budget: int = 2000) -> ProbeReport:
    """Minimize L_A(f)/∫f over single-crease f = max(0, ℓ) with rational ℓ.

    With rational polynomial A the evaluation is exact, so a negative minimum is
    a certificate. Creases with f affine on P (or f ≡ 0) are skipped.
    """
    if P.dim > 2:
        raise ValidationError("the crease probe handles n ≤ 2")
    pa = _as_exact(A, P.dim)
    cands = crease_candidates(P, generator_budget)
    best = None
    evaluated = 0
    for p, q, coeffs in cands:
        if pa is not None:
            val, mass = _crease_parts(P, pa, coeffs)
        else:
            val, mass = _crease_float(P, A, coeffs)
        if mass == 0 or _is_affine_on(P, coeffs):
            continue
        evaluated += 1
        ratio = val / mass
        if best is None or ratio < best[0]:
            best = (ratio, coeffs, (p, q))
    if best is None:
        return ProbeReport(0.0, None, None, None, "no-violation-found", evaluated)
    ratio, coeffs, pts = best
    exact = ratio if pa is not None else None
    cert = "unstable" if (ratio < 0 and pa is not None) else "no-violation-found"
    return ProbeReport(float(ratio), exact, tuple(coeffs), pts, cert, evaluated)


def _is_affine_on(P, coeffs) -> bool:
    *a, c = coeffs
    return all(sum(ai * vi for ai, vi in zip(a, v)) + c >= 0 for v in P.vertices)


def _crease_float(P, A, coeffs):
    """Quadrature fallback for non-polynomial A (clipped fan rule)."""
    a = np.array([float(x) for x in coeffs[:-1]])
    c = float(coeffs[-1])
    scheme = default_scheme(P, 40)
    fa = _as_callable(A)
    f = lambda X: np.maximum(0.0, X @ a + c)
    return L_A(P, fa, f, scheme), float(scheme.integrate(f))
