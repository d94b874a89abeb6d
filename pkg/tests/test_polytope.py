from fractions import Fraction as F

import numpy as np
import pytest

from toric_kahler.errors import (EmptyInterior, NonPrimitiveNormal, NonUnimodularVertex, NotFano,
                                 RedundantFacet, Unbounded, ValidationError)
from toric_kahler.polytope import (Facet, barycenter, boundary_barycenter, boundary_volume,
                                   build_quadrature, builtin, facet_measure, fano_structure,
                                   lattice_points, load_polytope, moment, polytope_from_json,
                                   verify_delzant, volume)
from toric_kahler.rational import Poly


def test_standard_simplex_is_delzant():
    for n in (1, 2, 3):
        facets = [Facet(tuple(int(i == j) for i in range(n)), 0) for j in range(n)]
        facets.append(Facet((-1,) * n, -1))
        P = verify_delzant(facets)
        assert len(P.vertices) == n + 1


def test_half_line_is_unbounded():
    with pytest.raises(Unbounded):
        verify_delzant([Facet((1,), 0)])


def test_non_unimodular_triangle_reports_vertex():
    with pytest.raises(NonUnimodularVertex) as exc:
        verify_delzant([Facet((1, 0), 0), Facet((0, 1), 0), Facet((-1, -2), -2)])
    assert tuple(exc.value.vertex) == (0, 1)
    assert abs(exc.value.det) == 2


def test_non_primitive_normal():
    with pytest.raises(NonPrimitiveNormal):
        verify_delzant([Facet((2, 0), 0), Facet((0, 1), 0), Facet((-1, -1), -1)])


def test_empty_interior():
    with pytest.raises(EmptyInterior):
        verify_delzant([Facet((1,), 1), Facet((-1,), 0)])


def test_redundant_facet_rejected():
    with pytest.raises(RedundantFacet):
        verify_delzant([Facet((1, 0), 0), Facet((0, 1), 0), Facet((-1, 0), -1), Facet((0, -1), -1),
                        Facet((-1, -1), -5)])


def test_lattice_points_square():
    P = builtin("square")
    assert lattice_points(P, 1) == [(0, 0), (0, 1), (1, 0), (1, 1)]
    assert len(lattice_points(P, 3)) == 16


@pytest.mark.parametrize("k", [1, 2, 5])
def test_lattice_counts(k):
    assert len(lattice_points(builtin("square"), k)) == (k + 1) ** 2
    assert len(lattice_points(builtin("simplex"), k)) == (k + 1) * (k + 2) // 2


def test_lattice_points_empty_dilate():
    P = verify_delzant([Facet((1,), F(1, 3)), Facet((-1,), F(-2, 3))])
    assert lattice_points(P, 1) == []


def test_interval_measures():
    P = builtin("interval")
    assert volume(P) == 1 and boundary_volume(P) == 2
    assert barycenter(P) == (F(1, 2),) and boundary_barycenter(P) == (F(1, 2),)


def test_bl1cp2_measures(bl1cp2):
    assert volume(bl1cp2) == 4
    assert boundary_volume(bl1cp2) == 8
    assert sorted(facet_measure(bl1cp2, r) for r in range(4)) == [1, 2, 2, 3]


def test_cp2_barycenters():
    P = builtin("cp2")
    assert barycenter(P) == (0, 0) and boundary_barycenter(P) == (0, 0)


def test_simplex_hypotenuse_lattice_length(simplex):
    r = next(i for i, f in enumerate(simplex.facets) if f.normal == (-1, -1))
    assert facet_measure(simplex, r) == 1


def test_fano_structure():
    assert fano_structure(builtin("fano-interval")).center == (0,)
    assert fano_structure(builtin("bl1cp2")).center == (0, 0)
    with pytest.raises(NotFano):
        fano_structure(builtin("simplex"))


def test_quadrature_examples(square, bl1cp2):
    q = build_quadrature(square, 4)
    assert abs(q.integrate(lambda X: np.ones(len(X))) - 1) < 1e-14
    qb = build_quadrature(bl1cp2, 6)
    assert abs(qb.integrate_boundary(lambda X: X[:, 0]) - 1) < 1e-13
    assert abs(qb.integrate(lambda X: X[:, 0]) - F(1, 3)) < 1e-13
    assert moment(bl1cp2, Poly.variable(2, 0)) == F(1, 3)


def test_quadrature_matches_exact_moments(bl1cp2):
    q = build_quadrature(bl1cp2, 8)
    for e in [(0, 0), (2, 0), (1, 3), (4, 4), (0, 7)]:
        exact = moment(bl1cp2, Poly(2, {e: F(1)}))
        approx = q.integrate(lambda X: X[:, 0] ** e[0] * X[:, 1] ** e[1])
        assert abs(approx - float(exact)) <= 1e-12 * max(1, abs(float(exact)))


def test_boundary_weights_carry_lattice_measure(bl1cp2):
    q = build_quadrature(bl1cp2, 4)
    masses = sorted(float(w.sum()) for w in q.boundary_weights)
    assert np.allclose(masses, [1, 2, 2, 3], atol=1e-13)


def test_json_roundtrip(bl1cp2, tmp_path):
    data = bl1cp2.to_json()
    assert all(isinstance(f["offset"], str) and "/" in f["offset"] for f in data["facets"])
    P = polytope_from_json(data)
    assert P.vertices == bl1cp2.vertices
    path = tmp_path / "p.json"
    import json
    path.write_text(json.dumps(data))
    assert load_polytope(path).facets == bl1cp2.facets


def test_malformed_json():
    with pytest.raises(ValidationError):
        polytope_from_json({"dim": 2})


def test_blowup_family_is_delzant():
    for j in range(1, 10):
        P = builtin(f"blowup-{j}-10")
        assert len(P.vertices) == 5
