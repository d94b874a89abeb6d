import numpy as np
import pytest

from toric_kahler.curvature import (abreu_scalar, curvature_field, curvature_tensor,
                                    weighted_abreu)
from toric_kahler.errors import NonpositiveWeight, SingularHessian
from toric_kahler.functions import AffineFunction, PolynomialFunction
from toric_kahler.potential import (GridFunction, grid_template, guillemin_potential,
                                    interior_samples, quadratic_potential,
                                    random_admissible_perturbation)
from toric_kahler.rational import Poly

X1 = np.linspace(0.01, 0.99, 25)[:, None]


def test_round_sphere_scalar(sphere_u):
    assert np.allclose(abreu_scalar(sphere_u, X1), 2, atol=1e-8)
    assert np.allclose(abreu_scalar(sphere_u, np.array([[0.2], [0.5], [0.8]]), method="stencil"), 2, atol=1e-6)


def test_quadratic_is_flat(square):
    u = quadratic_potential(square)
    X = interior_samples(square, 4)
    assert np.allclose(abreu_scalar(u, X), 0, atol=1e-12)
    s = curvature_tensor(u, [0.3, 0.6])
    assert np.allclose(s.F, 0) and np.allclose(s.G, 0) and abs(s.normF2) < 1e-24


def test_product_sphere(square):
    u = guillemin_potential(square)
    X = np.random.default_rng(0).uniform(0.02, 0.98, (50, 2))
    assert np.allclose(abreu_scalar(u, X), 4, atol=1e-8)


def test_hessian_of_L_at_midpoint(sphere_u):
    s = curvature_tensor(sphere_u, [0.5])
    assert abs(s.hessian_L[0, 0] - 8) < 1e-10


def test_contractions_agree(bl1cp2):
    u = random_admissible_perturbation(bl1cp2, seed=4)
    X = interior_samples(bl1cp2, 6, margin=0.05)
    idx = np.random.default_rng(1).choice(len(X), 100, replace=len(X) < 100)
    for x in X[idx]:
        s = curvature_tensor(u, x)
        U = np.linalg.inv(u.hessian(x[None])[0])
        assert np.allclose(s.G, s.G.T, atol=1e-9)
        assert np.allclose(s.G, s.G_from_L, rtol=1e-6, atol=1e-6 * np.abs(s.G).max())
        assert abs(np.sum(s.G * U) - s.S) <= 1e-6 * max(1, abs(s.S))
        assert abs(s.S - abreu_scalar(u, x[None])[0]) <= 1e-6 * max(1, abs(s.S))


def test_F_symmetries(bl1cp2):
    s = curvature_tensor(random_admissible_perturbation(bl1cp2, seed=5), [0.1, -0.2])
    F = s.F
    assert np.allclose(F, F.transpose(1, 0, 2, 3), atol=1e-9)
    assert np.allclose(F, F.transpose(0, 1, 3, 2), atol=1e-9)
    assert s.normF2 >= 0


def _weight_x(X):
    X = np.atleast_2d(X)
    return X[:, 0], np.ones_like(X), np.zeros((len(X), 1, 1))


def test_weighted_abreu_reductions(sphere_u):
    one = lambda X: (np.ones(len(X)), np.zeros_like(X), np.zeros((len(X), 1, 1)))
    assert np.allclose(weighted_abreu(sphere_u, one, [0.0], X1), abreu_scalar(sphere_u, X1), atol=1e-12)
    # −(1/x)(x(x − x²))'' = −(1/x)(2 − 6x) at x = 1/2 → 2
    assert abs(weighted_abreu(sphere_u, _weight_x, [0.0], [[0.5]])[0] - 2.0) < 1e-10
    X = np.array([[0.25], [0.6]])
    fg = weighted_abreu(sphere_u, _weight_x, [1.0], X) - weighted_abreu(sphere_u, _weight_x, [0.0], X)
    assert np.allclose(fg, 1 / X[:, 0], atol=1e-12)


def test_weighted_abreu_rejects_nonpositive_weight(sphere_u):
    neg = lambda X: (-np.ones(len(X)), np.zeros_like(X), np.zeros((len(X), 1, 1)))
    with pytest.raises(NonpositiveWeight):
        weighted_abreu(sphere_u, neg, [0.0], [[0.5]])


def test_singular_hessian_detected(interval):
    u = guillemin_potential(interval).with_correction(PolynomialFunction(Poly(1, {(2,): -10.0})))
    with pytest.raises(SingularHessian):
        abreu_scalar(u, [[0.5]])


def test_curvature_field_square(square):
    u = guillemin_potential(square)
    f = curvature_field(u, grid_template(square, 21), ("S", "L"))
    S = f["S"].values
    assert np.all(np.isnan(S[0])) and np.all(np.isnan(S[:, -1]))
    assert np.nanmax(np.abs(S - 4)) < 1e-8
    X = grid_template(square, 21).interior_points()
    L = f["L"].values[f["L"].flags == 1]
    oracle = -np.log(X[:, 0] * (1 - X[:, 0])) - np.log(X[:, 1] * (1 - X[:, 1]))
    assert np.allclose(L, oracle, atol=1e-12)


def test_curvature_field_round_sphere(sphere_u, interval):
    f = curvature_field(sphere_u, grid_template(interval, 33))["S"]
    assert np.nanmax(np.abs(f.values - 2)) < 1e-8


def test_curvature_field_empty():
    g = GridFunction([np.array([0.0, 1.0])], np.full(2, np.nan), np.zeros(2, int))
    from toric_kahler.polytope import builtin
    out = curvature_field(guillemin_potential(builtin("interval")), g)["S"]
    assert np.all(np.isnan(out.values))


def test_affine_invariance_exact(bl1cp2):
    u = random_admissible_perturbation(bl1cp2, seed=6)
    v = u.with_correction(AffineFunction(0.0, (1.5, -2.0)))
    X = interior_samples(bl1cp2, 5, margin=0.02)
    assert np.array_equal(u.hessian(X), v.hessian(X))
    assert np.array_equal(abreu_scalar(u, X), abreu_scalar(v, X))


def test_separability(square):
    from toric_kahler.polytope import builtin
    I = builtin("interval")
    v = PolynomialFunction(Poly(2, {(3, 0): 0.05, (0, 4): 0.02}))
    ua = guillemin_potential(I).with_correction(PolynomialFunction(Poly(1, {(3,): 0.05})))
    ub = guillemin_potential(I).with_correction(PolynomialFunction(Poly(1, {(4,): 0.02})))
    X = np.random.default_rng(2).uniform(0.05, 0.95, (20, 2))
    S2 = abreu_scalar(guillemin_potential(square).with_correction(v), X)
    assert np.allclose(S2, abreu_scalar(ua, X[:, :1]) + abreu_scalar(ub, X[:, 1:]), atol=1e-10)


def _sympy_scalar(points):
    """S = −Σ ∂_i∂_j (Hess u)^{-1}_{ij} for u = u_G(square) + x²y²/10 + x³/20, symbolically."""
    import sympy as sp
    x, y = sp.symbols("x y")
    u = sum(t * sp.log(t) + (1 - t) * sp.log(1 - t) for t in (x, y)) + x ** 2 * y ** 2 / 10 + x ** 3 / 20
    H = sp.hessian(u, (x, y))
    U = H.inv()
    S = -sum(sp.diff(U[i, j], v, w) for i, v in enumerate((x, y)) for j, w in enumerate((x, y)))
    f = sp.lambdify((x, y), S, "numpy")
    return np.array([float(f(*p)) for p in points])


def test_stencil_fourth_order_against_symbolic(square):
    corr = PolynomialFunction(Poly(2, {(2, 2): 0.1, (3, 0): 0.05}))
    u = guillemin_potential(square).with_correction(corr)
    X = np.array([[0.3, 0.4], [0.5, 0.5], [0.7, 0.25]])
    exact = _sympy_scalar(X)
    assert np.max(np.abs(abreu_scalar(u, X) - exact)) < 1e-10
    errs = [np.max(np.abs(abreu_scalar(u, X, method="stencil", h=h) - exact)) for h in (0.02, 0.01)]
    assert 12 <= errs[0] / errs[1] <= 20
