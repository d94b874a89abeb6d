from fractions import Fraction as F

import numpy as np
import pytest
import sympy as sp

from toric_kahler.functional import (AffineData, L_A, PLConvexFunction, constant_A, crease_value,
                                     default_scheme, extremal_affine, futaki, mabuchi_F_A,
                                     stability_probe, weak_form_check)
from toric_kahler.functions import AffineFunction, PolynomialFunction, monomial
from toric_kahler.polytope import builtin
from toric_kahler.potential import guillemin_potential, random_admissible_perturbation
from toric_kahler.rational import Poly

x, y = Poly.variable(2, 0), Poly.variable(2, 1)
X1 = Poly.variable(1, 0)

# frozen regression value, checked against the sympy oracle below
BL1CP2_EXTREMAL = (F(21, 11), (F(6, 11), F(6, 11)))


def _bl1cp2_oracle():
    """Extremal affine A on {x>−1, y>−1, x+y<1, x+y>−1} by direct symbolic integration."""
    X, Y, a, b, c = sp.symbols("x y a b c")

    def area(f):
        return (sp.integrate(sp.integrate(f, (Y, -1 - X, 1 - X)), (X, -1, 0))
                + sp.integrate(sp.integrate(f, (Y, -1, 1 - X)), (X, 0, 2)))

    def bnd(f):
        # lattice measure: dx along y=−1, dy along x=−1, dx along both diagonals
        return (sp.integrate(f.subs(Y, -1), (X, 0, 2)) + sp.integrate(f.subs(X, -1), (Y, 0, 2))
                + sp.integrate(f.subs(Y, 1 - X), (X, -1, 2)) + sp.integrate(f.subs(Y, -1 - X), (X, -1, 0)))

    A = a + b * X + c * Y
    eqs = [bnd(f) - area(A * f) for f in (sp.Integer(1), X, Y)]
    sol = sp.solve(eqs, [a, b, c])
    return sol[a], sol[b], sol[c]


def test_bl1cp2_extremal_matches_oracle(bl1cp2):
    A = extremal_affine(bl1cp2)
    a, b, c = _bl1cp2_oracle()
    assert (A.constant, A.gradient) == BL1CP2_EXTREMAL
    assert (F(int(a.p), int(a.q)), F(int(b.p), int(b.q)), F(int(c.p), int(c.q))) == \
        (BL1CP2_EXTREMAL[0], *BL1CP2_EXTREMAL[1])


def test_L_A_example(bl1cp2):
    assert L_A(bl1cp2, 2, x) == F(1, 3)
    assert abs(L_A(bl1cp2, 2.0, lambda X: X[:, 0], default_scheme(bl1cp2)) - 1 / 3) < 1e-13


@pytest.mark.parametrize("name", ["interval", "square", "bl1cp2", "cp2", "blowup-3-10"])
def test_constant_A_annihilates_constants(name):
    P = builtin(name)
    assert L_A(P, constant_A(P), Poly.constant(P.dim, 1)) == 0


def test_odd_functions_on_symmetric_polytope(square):
    sq = builtin("fano-square")
    assert L_A(sq, constant_A(sq), x * x * x * y * y) == 0


def test_constant_A_values(interval, square, bl1cp2):
    assert (constant_A(interval), constant_A(square), constant_A(bl1cp2)) == (2, 4, 2)


def test_futaki_values(interval, bl1cp2):
    assert futaki(interval) == (0,)
    assert futaki(builtin("cp2")) == (0, 0)
    assert futaki(bl1cp2) == (F(1, 3), F(1, 3))


def test_futaki_is_mass_center_difference(bl1cp2):
    from toric_kahler.polytope import barycenter, boundary_barycenter, boundary_volume
    diff = [boundary_volume(bl1cp2) * (p - q) for p, q in zip(boundary_barycenter(bl1cp2), barycenter(bl1cp2))]
    assert tuple(diff) == futaki(bl1cp2)


def test_extremal_on_symmetric_polytopes(interval):
    for name in ("interval", "fano-square", "cp2"):
        P = builtin(name)
        A = extremal_affine(P)
        assert A.constant == constant_A(P) and all(g == 0 for g in A.gradient)


@pytest.mark.parametrize("name", ["bl1cp2", "blowup-2-10", "simplex", "blowup-7-10"])
def test_extremal_annihilates_affine(name):
    P = builtin(name)
    A = extremal_affine(P)
    fs = [Poly.constant(2, 1), x, y]
    assert all(L_A(P, A, f) == 0 for f in fs)
    scheme = default_scheme(P)
    for f in (lambda X: np.ones(len(X)), lambda X: X[:, 0], lambda X: X[:, 1]):
        assert abs(L_A(P, A, f, scheme)) < 1e-12


def test_F_A_affine_shift(bl1cp2):
    u = random_admissible_perturbation(bl1cp2, seed=7)
    ell = AffineFunction(0.5, (1.0, -0.25))
    A = AffineData(2, (0, 0))
    diff = mabuchi_F_A(u.with_correction(ell), A) - mabuchi_F_A(u, A)
    assert abs(diff - L_A(bl1cp2, A, ell, default_scheme(bl1cp2))) < 1e-9
    Ae = extremal_affine(bl1cp2)
    assert abs(mabuchi_F_A(u.with_correction(ell), Ae) - mabuchi_F_A(u, Ae)) < 1e-9


def test_F_A_minimized_by_round_sphere(sphere_u, interval):
    fam = PolynomialFunction(Poly(1, {(1,): -1 / 3, (2,): 4 / 3, (3,): -1.0}))   # x(1−x)(x−1/3)
    s = np.linspace(-0.5, 0.5, 11)
    vals = [mabuchi_F_A(sphere_u.with_correction(fam.scaled(t)), 2) for t in s]
    assert int(np.argmin(vals)) == 5


def test_F_A_finite_on_square(square):
    assert np.isfinite(mabuchi_F_A(guillemin_potential(square), 4))


def test_F_A_convex_along_segments(bl1cp2):
    u0 = random_admissible_perturbation(bl1cp2, seed=8)
    u1 = random_admissible_perturbation(bl1cp2, seed=9)
    A = extremal_affine(bl1cp2)
    vals = []
    for s in np.linspace(0, 1, 7):
        vals.append(mabuchi_F_A(guillemin_potential(bl1cp2).with_correction(
            u0.correction.scaled(1 - s)).with_correction(u1.correction.scaled(s)), A))
    assert np.min(np.diff(vals, 2)) >= -1e-8


def test_weak_form(sphere_u):
    lhs, rhs = weak_form_check(sphere_u, 2, monomial((2,)))
    assert abs(lhs - 1 / 3) < 1e-13 and abs(rhs - 1 / 3) < 1e-13
    assert np.allclose(weak_form_check(sphere_u, 2, AffineFunction(0.2, (3.0,))), 0, atol=1e-13)
    other = sphere_u.with_correction(PolynomialFunction(Poly(1, {(4,): 0.3})))
    lhs, rhs = weak_form_check(other, 2, monomial((2,)))
    assert abs(lhs - rhs) > 1e-3


def test_L_A_linear():
    P = builtin("bl1cp2")
    rng = np.random.default_rng(0)
    f = Poly(2, {(i, j): F(int(rng.integers(-5, 5))) for i in range(3) for j in range(3)})
    g = Poly(2, {(i, j): F(int(rng.integers(-5, 5))) for i in range(4) for j in range(2)})
    A = extremal_affine(P)
    assert L_A(P, A, f * Poly.constant(2, F(3)) + g * Poly.constant(2, F(-2))) == \
        3 * L_A(P, A, f) - 2 * L_A(P, A, g)


def test_interval_crease_closed_form(interval):
    for c in (F(1, 7), F(1, 2), F(5, 6)):
        val, mass = crease_value(interval, 2, (F(1), -c))
        assert val == (1 - c) * c and mass == (1 - c) ** 2 / 2
    rep = stability_probe(interval, 2, 200)
    assert rep.value > 0 and rep.certificate == "no-violation-found"


def test_affine_crease_has_zero_value(bl1cp2):
    A = extremal_affine(bl1cp2)
    # ℓ ≥ 0 on the whole polytope, so max(0, ℓ) = ℓ is affine
    val, mass = crease_value(bl1cp2, A, (F(1), F(0), F(5)))
    assert val == 0 and mass > 0


def test_crease_exiting_polytope_tends_to_zero(square):
    vals = [abs(float(crease_value(square, 4, (F(1), F(0), -(1 - F(1, m))))[0])) for m in (10, 100, 1000)]
    assert vals[0] > vals[1] > vals[2] and vals[2] < 1e-3


def test_probe_certifies_unstable_square():
    P = builtin("square")
    A = Poly.constant(2, F(4)) + ((x - Poly.constant(2, F(1, 2))) * (x - Poly.constant(2, F(1, 2)))
                                  - Poly.constant(2, F(1, 12))) * Poly.constant(2, F(200))
    rep = stability_probe(P, A, 500)
    assert rep.certificate == "unstable" and rep.exact_value < 0
    assert isinstance(rep.function, PLConvexFunction)
