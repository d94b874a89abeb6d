from fractions import Fraction

import numpy as np
import pytest

from toric_kahler.curvature import abreu_scalar
from toric_kahler.errors import InconsistentA, SingularHessian, ValidationError
from toric_kahler.functional import AffineData, PLConvexFunction, crease_value, extremal_affine, weak_form_check
from toric_kahler.functions import GaussianBump, monomial
from toric_kahler.potential import guillemin_potential
from toric_kahler.rational import Poly
from toric_kahler.solver import (COLLAPSE, CONVERGED, RitzSpace, crease_angle, degree_for_grid,
                                 extremal_profile_1d, fit_two_piece, gauge_fixed, minimizing_sequence_probe,
                                 solution_gap, solve_extremal_1d, solve_prescribed_2d, solve_soliton_2d,
                                 witness_L_A)

from conftest import round_sphere

BETA = 200


def collapse_datum():
    """A = 4 + β((x − ½)² − 1/12) on the unit square; L_A(max(x − ½, 0)) = 1/4 − β/192."""
    x, half = Poly.variable(2, 0), Poly.constant(2, Fraction(1, 2))
    return Poly.constant(2, Fraction(4)) + ((x - half) * (x - half) - Poly.constant(2, Fraction(1, 12))) \
        * Poly.constant(2, Fraction(BETA))


def probe_crease():
    return PLConvexFunction((((1.0, 0.0), -0.5), ((0.0, 0.0), 0.0)))


# ------------------------------------------------------------------ 1D

def test_round_sphere_1d(interval):
    u = solve_extremal_1d(interval, 2)
    X = np.linspace(0.001, 0.999, 999)[:, None]
    assert solution_gap(u, u, X) == 0
    vals = u.value(X) - round_sphere(X[:, 0])
    assert np.ptp(vals) <= 1e-8
    assert np.max(np.abs(abreu_scalar(u, X) - 2)) <= 1e-8


def test_profile_is_guillemin_quadratic(interval):
    q = extremal_profile_1d(interval, AffineData(Fraction(2), (Fraction(0),)))
    assert q == Poly(1, {(1,): Fraction(1), (2,): Fraction(-1)}) or \
        all(q.terms.get(e, 0) == v for e, v in {(0,): 0, (1,): 1, (2,): -1, (3,): 0}.items())


def test_other_interval():
    from toric_kahler.polytope import Facet, verify_delzant
    P = verify_delzant([Facet((1,), Fraction(-1)), Facet((-1,), Fraction(-2))])   # (−1, 2)
    A = extremal_affine(P)
    u = solve_extremal_1d(P, A)
    X = np.linspace(-0.99, 1.99, 50)[:, None]
    assert np.allclose(abreu_scalar(u, X), float(A.constant), atol=1e-8)


def test_inconsistent_A(interval):
    with pytest.raises(InconsistentA):
        solve_extremal_1d(interval, 3)
    with pytest.raises(InconsistentA):
        solve_extremal_1d(interval, AffineData(2, (1,)))


@pytest.mark.parametrize("f", [monomial((2,)), monomial((3,))])
def test_weak_form_1d(interval, f):
    lhs, rhs = weak_form_check(solve_extremal_1d(interval, 2), 2, f)
    assert abs(lhs - rhs) < 1e-8


# ------------------------------------------------------------------ 2D prescribed

def test_degree_for_grid():
    assert [degree_for_grid(n) for n in (5, 9, 17, 33, 65)] == [2, 2, 4, 8, 16]


def test_square_constant(square):
    r = solve_prescribed_2d(square, 4, grid=33)
    assert r.status == CONVERGED and r.residual <= 1e-4
    X = np.random.default_rng(0).uniform(0.01, 0.99, (300, 2))
    closed = guillemin_potential(square)
    assert solution_gap(r.potential, closed, X) <= 1e-3


def test_simplex_constant(simplex):
    r = solve_prescribed_2d(simplex, 6, grid=17)
    assert r.status == CONVERGED and r.iterations == 0


def test_bl1cp2_extremal(bl1cp2):
    A = extremal_affine(bl1cp2)
    r = solve_prescribed_2d(bl1cp2, A, grid=33)
    assert r.status == CONVERGED and r.residual <= 1e-4
    assert r.residuals[-1] < r.residuals[0]


def test_rerun_from_solution_is_fixed_point(bl1cp2):
    A = extremal_affine(bl1cp2)
    first = solve_prescribed_2d(bl1cp2, A, grid=33)
    coeffs = first.potential.correction.coefficients
    second = solve_prescribed_2d(bl1cp2, A, grid=33, degree=first.degree, initial=coeffs)
    assert second.iterations <= 1 and second.status == CONVERGED


def test_manufactured_refinement(square):
    exact = guillemin_potential(square).with_correction(GaussianBump((0.3, 0.6), 0.5, 0.05))
    A = lambda X: abreu_scalar(exact, np.atleast_2d(X))
    X = np.random.default_rng(0).uniform(0.02, 0.98, (400, 2))
    gaps = [solution_gap(solve_prescribed_2d(square, A, grid=n, tol=1e-14, adapt=False).potential, exact, X)
            for n in (9, 17, 33)]
    assert all(a / b >= 4 for a, b in zip(gaps, gaps[1:]))


def test_gauge_invariance_of_residual(bl1cp2):
    A = extremal_affine(bl1cp2)
    u = solve_prescribed_2d(bl1cp2, A, grid=17).potential
    X = np.random.default_rng(1).uniform(0.05, 0.3, (40, 2))
    g = gauge_fixed(u, [0.2, 0.2])
    assert np.array_equal(abreu_scalar(u, X), abreu_scalar(g, X)) or \
        np.allclose(abreu_scalar(u, X), abreu_scalar(g, X), atol=1e-12)
    assert np.allclose(g.gradient(np.array([[0.2, 0.2]])), 0, atol=1e-12)


def test_nonconvex_start_rejected(square):
    space = RitzSpace(square, 4, 9)
    c = np.zeros(space.size)
    c[0] = -1e6
    with pytest.raises(SingularHessian):
        solve_prescribed_2d(square, 4, grid=9, degree=4, initial=c)


def test_accepted_iterates_stay_convex(bl1cp2):
    r = solve_prescribed_2d(bl1cp2, extremal_affine(bl1cp2), grid=17)
    X = np.random.default_rng(2).uniform(0.01, 0.5, (500, 2))
    X = X[bl1cp2.contains(X)]
    assert np.all(np.linalg.eigvalsh(r.potential.hessian(X)) > 0)


def test_dimension_checked(interval):
    with pytest.raises(ValidationError):
        solve_prescribed_2d(interval, 2)


# ------------------------------------------------------------------ collapse

@pytest.fixture(scope="module")
def collapsed(square):
    return solve_prescribed_2d(square, collapse_datum(), grid=33)


def test_collapse_detected(collapsed, square):
    assert collapsed.status == COLLAPSE
    assert collapsed.witness is not None
    assert crease_angle(collapsed.witness, probe_crease()) <= 15
    assert witness_L_A(square, collapse_datum(), collapsed.witness) < 0


def test_probe_crease_certified(square):
    val, mass = crease_value(square, collapse_datum(), (1, 0, Fraction(-1, 2)))
    assert val == Fraction(1, 4) - Fraction(BETA, 192) and mass == Fraction(1, 8)


def test_two_piece_fit_recovers_crease():
    X = np.random.default_rng(3).uniform(0, 1, (400, 2))
    truth = PLConvexFunction((((0.6, 0.8), -0.7), ((0.0, 0.0), 0.0)))
    fit = fit_two_piece(X, truth(X))
    assert crease_angle(fit, truth) < 1
    assert np.max(np.abs(fit(X) - truth(X))) < 1e-8


def test_probe_statuses(square):
    assert minimizing_sequence_probe(square, 4, 0).status == "Empty"
    assert minimizing_sequence_probe(square, 4, 10).status == "Bounded"
    tr = minimizing_sequence_probe(square, collapse_datum(), 80)
    assert tr.status == COLLAPSE
    assert crease_angle(tr.final_fit, probe_crease()) <= 15
    norms = [c.norm for c in tr.checkpoints]
    assert norms[-1] > norms[0]


# ------------------------------------------------------------------ soliton

def test_soliton_fano_square(fano_square):
    r = solve_soliton_2d(fano_square, grid=17)
    assert r.status == CONVERGED and r.residual <= 1e-4
    assert abs(r.extras["constant"] - 2 * np.log(2)) <= 1e-4
    assert np.allclose(r.extras["gamma"], 0, atol=1e-4)


def test_soliton_bl1cp2(fano_bl1cp2):
    r = solve_soliton_2d(fano_bl1cp2, grid=33)
    assert r.status == CONVERGED and r.residual <= 1e-4
    assert r.extras["gamma_drift"] <= 1e-3
    assert np.allclose(r.potential.gradient(np.zeros((1, 2))), 0, atol=1e-10)
