"""Moment polytopes: facet data, Delzant verification, lattice points, exact
measures, Fano structure, and quadrature rules with the lattice boundary measure."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from importlib import resources
from itertools import combinations
from math import floor, ceil, gcd
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import quadrature as quad
from .errors import (EmptyInterior, NonPrimitiveNormal, NonSimpleVertex,
                     NonUnimodularVertex, NotFano, RedundantFacet, Unbounded,
                     ValidationError)
from .rational import (Poly, as_fraction, det, fraction_str, kernel_vector,
                       lattice_box, rank, simplex_integral, solve)

Point = tuple[Fraction, ...]


@dataclass(frozen=True)
class Facet:
    """The half-space normal·x > offset with a primitive integer normal."""

    normal: tuple[int, ...]
    offset: Fraction

    def __post_init__(self):
        normal = tuple(self.normal)
        for c in normal:
            if isinstance(c, bool) or not isinstance(c, (int, np.integer)) and not (
                    isinstance(c, Fraction) and c.denominator == 1):
                raise NonPrimitiveNormal(f"normal entries must be integers, got {normal}")
        normal = tuple(int(c) for c in normal)
        if all(c == 0 for c in normal):
            raise NonPrimitiveNormal("normal is zero")
        g = 0
        for c in normal:
            g = gcd(g, c)
        if g != 1:
            raise NonPrimitiveNormal(f"normal {normal} is not primitive (gcd {g})")
        object.__setattr__(self, "normal", normal)
        object.__setattr__(self, "offset", as_fraction(self.offset))

    def slack(self, x) -> Fraction:
        return sum(Fraction(a) * b for a, b in zip(self.normal, x)) - self.offset

    @property
    def norm_sq(self) -> int:
        return sum(c * c for c in self.normal)


@dataclass(frozen=True)
class DelzantPolytope:
    """A verified Delzant polytope; construct through verify_delzant."""

    dim: int
    facets: tuple[Facet, ...]
    vertices: tuple[Point, ...]
    vertex_facets: tuple[tuple[int, ...], ...] = field(repr=False)
    label: str = ""

    # float views used by the numerical modules
    @cached_property
    def normals(self) -> np.ndarray:
        return np.array([f.normal for f in self.facets], dtype=float)

    @cached_property
    def offsets(self) -> np.ndarray:
        return np.array([float(f.offset) for f in self.facets])

    @cached_property
    def vertex_array(self) -> np.ndarray:
        return np.array([[float(c) for c in v] for v in self.vertices])

    def slacks(self, x) -> np.ndarray:
        """ℓ_r(x) = λ_r·x − c_r for points x of shape (..., n); result (..., m)."""
        return np.asarray(x, dtype=float) @ self.normals.T - self.offsets

    def contains(self, x, strict: bool = True, tol: float = 0.0) -> np.ndarray:
        s = self.slacks(x)
        return np.all(s > tol, axis=-1) if strict else np.all(s >= -tol, axis=-1)

    def facet_vertices(self, r: int) -> list[Point]:
        return [v for v, tight in zip(self.vertices, self.vertex_facets) if r in tight]

    @cached_property
    def ordered_vertices(self) -> list[Point]:
        """Vertices in counter-clockwise order (polygons only)."""
        if self.dim != 2:
            raise ValueError("ordering is defined for polygons")
        c = self.vertex_array.mean(axis=0)
        ang = [np.arctan2(float(v[1]) - c[1], float(v[0]) - c[0]) for v in self.vertices]
        return [self.vertices[i] for i in np.argsort(ang)]

    @cached_property
    def edges(self) -> list[tuple[int, Point, Point]]:
        """(facet index, start, end) with the interior on the left (polygons)."""
        out = []
        verts = self.ordered_vertices
        for i, p in enumerate(verts):
            q = verts[(i + 1) % len(verts)]
            shared = set(self.vertex_facets[self.vertices.index(p)]) & set(
                self.vertex_facets[self.vertices.index(q)])
            (r,) = shared
            out.append((r, p, q))
        return out

    @cached_property
    def simplices(self) -> list[list[Point]]:
        return _triangulate(self, frozenset(), list(self.vertices))

    @cached_property
    def facet_simplices(self) -> list[list[list[Point]]]:
        return [_triangulate(self, frozenset([r]), self.facet_vertices(r))
                for r in range(len(self.facets))]

    @cached_property
    def diameter(self) -> float:
        v = self.vertex_array
        return float(np.max(np.linalg.norm(v[:, None, :] - v[None, :, :], axis=-1)))

    def inradius(self, center=None) -> float:
        """Euclidean distance from center (default barycenter) to the nearest facet."""
        c = np.asarray([float(x) for x in (center if center is not None else barycenter(self))])
        return float(np.min(self.slacks(c) / np.linalg.norm(self.normals, axis=1)))

    def to_json(self) -> dict:
        return {
            "dim": self.dim,
            "facets": [{"normal": list(f.normal), "offset": fraction_str(f.offset)}
                       for f in self.facets],
            "label": self.label,
        }

    def translated(self, shift: Sequence) -> "DelzantPolytope":
        """The polytope P − shift (offsets move by λ·shift)."""
        shift = [as_fraction(s) for s in shift]
        facets = [Facet(f.normal, f.offset - sum(Fraction(a) * s for a, s in zip(f.normal, shift)))
                  for f in self.facets]
        return verify_delzant(facets, label=self.label)


@dataclass(frozen=True)
class FanoPolytope:
    base: DelzantPolytope
    center: Point

    @cached_property
    def centered(self) -> DelzantPolytope:
        """The base translated so that the center sits at the origin."""
        if all(c == 0 for c in self.center):
            return self.base
        return self.base.translated(self.center)


@dataclass(frozen=True)
class QuadratureScheme:
    """Interior rule on P and per-facet boundary rules carrying dσ."""

    points: np.ndarray
    weights: np.ndarray
    boundary_points: tuple[np.ndarray, ...]
    boundary_weights: tuple[np.ndarray, ...]
    degree: int
    graded: bool = False

    def integrate(self, f: Callable | np.ndarray):
        vals = f(self.points) if callable(f) else np.asarray(f)
        return np.tensordot(self.weights, vals, axes=(0, 0))

    def integrate_boundary(self, f: Callable):
        return sum(np.tensordot(w, f(p), axes=(0, 0))
                   for p, w in zip(self.boundary_points, self.boundary_weights))

    @property
    def all_boundary_points(self) -> np.ndarray:
        return np.concatenate(self.boundary_points)

    @property
    def all_boundary_weights(self) -> np.ndarray:
        return np.concatenate(self.boundary_weights)


def facet(normal, offset) -> Facet:
    return Facet(tuple(normal), as_fraction(offset))


def verify_delzant(facets: Sequence[Facet], label: str = "") -> DelzantPolytope:
    facets = tuple(f if isinstance(f, Facet) else facet(*f) for f in facets)
    if not facets:
        raise ValidationError("no facets")
    n = len(facets[0].normal)
    if any(len(f.normal) != n for f in facets):
        raise ValidationError("facet normals have inconsistent dimensions")
    normals = [f.normal for f in facets]

    recession = _recession_ray(normals, n)

    vertices: dict[Point, None] = {}
    for subset in combinations(range(len(facets)), n):
        rows = [normals[i] for i in subset]
        if det(rows) == 0:
            continue
        x = solve(rows, [facets[i].offset for i in subset])
        if all(f.slack(x) >= 0 for f in facets):
            vertices[tuple(x)] = None
    if recession is not None:
        raise Unbounded(f"recession direction {[str(c) for c in recession]}")
    if not vertices:
        raise EmptyInterior("the inequalities have no common solution")
    verts = sorted(vertices)
    centroid = [sum(v[i] for v in verts) / len(verts) for i in range(n)]
    if not all(f.slack(centroid) > 0 for f in facets):
        raise EmptyInterior("the solution set is not full-dimensional")

    tight_sets = []
    for v in verts:
        tight = tuple(i for i, f in enumerate(facets) if f.slack(v) == 0)
        if len(tight) != n:
            raise NonSimpleVertex(v, tight)
        d = det([normals[i] for i in tight])
        if abs(d) != 1:
            raise NonUnimodularVertex(v, int(abs(d)))
        tight_sets.append(tight)
    for r in range(len(facets)):
        touching = [v for v, t in zip(verts, tight_sets) if r in t]
        if not touching or _affine_rank(touching) != n - 1:
            raise RedundantFacet(f"facet {r} does not support a face of codimension one")
    return DelzantPolytope(n, facets, tuple(verts), tuple(tight_sets), label)


def _recession_ray(normals, n):
    """A nonzero d with λ_r·d ≥ 0 for all r, or None if the cone is trivial."""
    if rank(normals) < n:
        return kernel_vector_full(normals, n)
    for subset in combinations(range(len(normals)), n - 1):
        rows = [normals[i] for i in subset]
        if n > 1 and rank(rows) < n - 1:
            continue
        d = kernel_vector(rows, n) if n > 1 else [Fraction(1)]
        if d is None:
            continue
        dots = [sum(a * b for a, b in zip(lam, d)) for lam in normals]
        if all(x >= 0 for x in dots):
            return d
        if all(x <= 0 for x in dots):
            return [-c for c in d]
    return None


def kernel_vector_full(rows, n):
    """Nonzero null vector of a rank-deficient system."""
    basis = list(rows)
    indep = []
    for row in basis:
        if rank(indep + [row]) > len(indep):
            indep.append(row)
    e = 0
    while len(indep) < n - 1:
        unit = [1 if i == e else 0 for i in range(n)]
        if rank(indep + [unit]) > len(indep):
            indep.append(unit)
        e += 1
    return kernel_vector(indep, n) if n > 1 else [Fraction(1)]


def _affine_rank(points) -> int:
    if len(points) <= 1:
        return 0
    p0 = points[0]
    return rank([[a - b for a, b in zip(p, p0)] for p in points[1:]])


def _triangulate(P: DelzantPolytope, S: frozenset, verts: list[Point]) -> list[list[Point]]:
    """Triangulate the face cut out by facet set S by coning from its first vertex."""
    dim = _affine_rank(verts)
    if len(verts) == dim + 1:
        return [list(verts)]
    apex = verts[0]
    seen = set()
    out = []
    for r in range(len(P.facets)):
        if r in S:
            continue
        sub = [v for v in verts if P.facets[r].slack(v) == 0]
        if apex in sub or len(sub) < dim or _affine_rank(sub) != dim - 1:
            continue
        key = frozenset(sub)
        if key in seen:
            continue
        seen.add(key)
        for simplex in _triangulate(P, S | {r}, sub):
            out.append([apex] + simplex)
    return out


def lattice_points(P: DelzantPolytope, k: int) -> list[tuple[int, ...]]:
    if k < 1:
        raise ValidationError("k must be a positive integer")
    lows = [floor(min(v[i] for v in P.vertices) * k) for i in range(P.dim)]
    highs = [ceil(max(v[i] for v in P.vertices) * k) for i in range(P.dim)]
    pts = [p for p in lattice_box(lows, highs)
           if all(sum(a * b for a, b in zip(f.normal, p)) >= k * f.offset for f in P.facets)]
    return sorted(pts)


def _simplex_volume(simplex) -> Fraction:
    n = len(simplex) - 1
    v0 = simplex[0]
    from math import factorial
    return abs(det([[a - b for a, b in zip(v, v0)] for v in simplex[1:]])) / factorial(n)


def _facet_simplex_measure(simplex, normal) -> Fraction:
    """dσ-measure of an (n-1)-simplex lying in the facet with primitive normal."""
    from math import factorial
    n = len(normal)
    v0 = simplex[0]
    rows = [[a - b for a, b in zip(v, v0)] for v in simplex[1:]] + [list(normal)]
    return abs(det(rows)) / (factorial(n - 1) * sum(c * c for c in normal))


def moment(P: DelzantPolytope, poly: Poly) -> Fraction:
    """Exact ∫_P poly dx."""
    return sum((simplex_integral(poly, s, _simplex_volume(s)) for s in P.simplices), Fraction(0))


def facet_moment(P: DelzantPolytope, r: int, poly: Poly) -> Fraction:
    normal = P.facets[r].normal
    return sum((simplex_integral(poly, s, _facet_simplex_measure(s, normal))
                for s in P.facet_simplices[r]), Fraction(0))


def boundary_moment(P: DelzantPolytope, poly: Poly) -> Fraction:
    """Exact ∫_{∂P} poly dσ."""
    return sum((facet_moment(P, r, poly) for r in range(len(P.facets))), Fraction(0))


def volume(P: DelzantPolytope) -> Fraction:
    return moment(P, Poly.constant(P.dim, Fraction(1)))


def boundary_volume(P: DelzantPolytope) -> Fraction:
    return boundary_moment(P, Poly.constant(P.dim, Fraction(1)))


def facet_measure(P: DelzantPolytope, r: int) -> Fraction:
    return facet_moment(P, r, Poly.constant(P.dim, Fraction(1)))


def barycenter(P: DelzantPolytope) -> Point:
    vol = volume(P)
    return tuple(moment(P, Poly.variable(P.dim, i)) / vol for i in range(P.dim))


def boundary_barycenter(P: DelzantPolytope) -> Point:
    vol = boundary_volume(P)
    return tuple(boundary_moment(P, Poly.variable(P.dim, i)) / vol for i in range(P.dim))


def fano_structure(P: DelzantPolytope) -> FanoPolytope:
    n = P.dim
    rows = [f.normal for f in P.facets]
    rhs = [f.offset + 1 for f in P.facets]
    basis = None
    for subset in combinations(range(len(rows)), n):
        if det([rows[i] for i in subset]) != 0:
            basis = subset
            break
    center = solve([rows[i] for i in basis], [rhs[i] for i in basis])
    if any(f.slack(center) != 1 for f in P.facets):
        raise NotFano("no point lies at lattice distance one from every facet")
    return FanoPolytope(P, tuple(center))


def build_quadrature(P: DelzantPolytope, degree: int, boundary_nodes_per_facet: int | None = None,
                     graded: bool = False, levels: int = 20, ratio: float = 0.25) -> QuadratureScheme:
    """Fan rule from the barycenter; exact to the stated degree unless graded.

    The graded variant refines geometrically toward every facet and vertex, for
    integrands with logarithmic boundary singularities.
    """
    if degree < 1:
        raise ValidationError("degree must be at least 1")
    q = degree // 2 + 1
    qb = boundary_nodes_per_facet or q
    bary = [float(c) for c in barycenter(P)]
    pts, wts = [], []
    bpts, bwts = [], []
    if P.dim == 1:
        for r, f in enumerate(P.facets):
            end = float(P.facet_vertices(r)[0][0])
            p, w, _ = quad.collapsed_segment(bary[0], end, q, graded, levels, ratio)
            pts.append(p)
            wts.append(w)
            bpts.append(np.array([[end]]))
            bwts.append(np.array([1.0 / abs(f.normal[0])]))
    elif P.dim == 2:
        for r, a, b in P.edges:
            a_f = [float(c) for c in a]
            b_f = [float(c) for c in b]
            p, w, _ = quad.collapsed_triangle(bary, a_f, b_f, q, graded, levels, ratio)
            pts.append(p)
            wts.append(w)
            s, ws = quad.segment_rule(qb, graded, levels, ratio)
            a_n, b_n = np.array(a_f), np.array(b_f)
            bpts.append(a_n + s[:, None] * (b_n - a_n))
            bwts.append(ws * float(facet_measure(P, r)))
    else:
        raise NotImplementedError("quadrature is implemented for n = 1 and n = 2")
    order = _facet_order(P)
    return QuadratureScheme(
        np.concatenate(pts), np.concatenate(wts),
        tuple(bpts[i] for i in order), tuple(bwts[i] for i in order), degree, graded)


def _facet_order(P):
    """Permutation mapping facet index to position in the construction loop."""
    if P.dim == 1:
        return list(range(len(P.facets)))
    pos = {r: i for i, (r, _, _) in enumerate(P.edges)}
    return [pos[r] for r in range(len(P.facets))]


def polytope_from_json(data: dict) -> DelzantPolytope:
    try:
        dim = int(data["dim"])
        facets = [Facet(tuple(f["normal"]), as_fraction(f["offset"])) for f in data["facets"]]
    except (KeyError, TypeError, ValueError, ZeroDivisionError) as exc:
        raise ValidationError(f"malformed polytope description: {exc}") from exc
    if any(len(f.normal) != dim for f in facets):
        raise ValidationError("normal length does not match dim")
    return verify_delzant(facets, label=str(data.get("label", "")))


def load_polytope(path) -> DelzantPolytope:
    """Read a polytope JSON file, or a built-in name such as 'square' or 'blowup:1/2'."""
    p = Path(path)
    if p.exists():
        return polytope_from_json(json.loads(p.read_text()))
    return builtin(str(path))


BUILTIN_NAMES = ("interval", "fano-interval", "square", "fano-square", "simplex", "cp2", "bl1cp2",
                 *(f"blowup-{j}-10" for j in range(1, 10)))


def builtin(name: str) -> DelzantPolytope:
    """Built-in polytopes shipped as data files; 'blowup:<δ>' gives the blown-up unit square."""
    if name.startswith("blowup:"):
        return blowup_square(as_fraction(name.split(":", 1)[1]))
    stem = name[:-5] if name.endswith(".json") else name
    if stem not in BUILTIN_NAMES:
        raise ValidationError(f"unknown polytope {name!r}")
    text = resources.files("toric_kahler").joinpath("data", "polytopes", f"{stem}.json").read_text()
    return polytope_from_json(json.loads(text))


def blowup_square(delta) -> DelzantPolytope:
    """Unit square with the corner at the origin cut by x + y > δ, 0 < δ < 1."""
    delta = as_fraction(delta)
    if not 0 < delta < 1:
        raise ValidationError("blow-up size must lie in (0, 1)")
    facets = [Facet((1, 0), 0), Facet((0, 1), 0), Facet((-1, 0), -1), Facet((0, -1), -1),
              Facet((1, 1), delta)]
    return verify_delzant(facets, label=f"blowup square delta={fraction_str(delta)}")
