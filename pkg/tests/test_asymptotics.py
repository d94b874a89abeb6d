from fractions import Fraction
from math import log

import numpy as np
import pytest

from toric_kahler.asymptotics import (CoefficientVector, algebraic_potential, binomial_reference,
                                      complex_step_hessian, constant_term_by_quadrature, density_roundtrip,
                                      l2_coefficients, l2_log_integral, laplace_log_approximation,
                                      veronese_convolution)
from toric_kahler.errors import DegenerateSupport, ValidationError
from toric_kahler.functions import AffineFunction

KS = (8, 16, 32, 64)
NUS = (0.25, 0.5, 0.75)
T = np.linspace(-6, 6, 25)[:, None]


def entropy(nu):
    return nu * log(nu) + (1 - nu) * log(1 - nu)


def test_round_algebraic_potential():
    phi = algebraic_potential(CoefficientVector.from_weights([[0], [1]], [1, 1]))
    assert np.allclose(phi.value(T), np.log1p(np.exp(T[:, 0])), atol=1e-14)
    s = 1 / (1 + np.exp(-T[:, 0]))
    assert np.allclose(phi.gradient(T)[:, 0], s)
    assert np.allclose(phi.hessian(T)[:, 0, 0], s * (1 - s))


def test_scaling_weights_shifts_potential():
    a = CoefficientVector.from_weights([[0], [1], [2]], [1, 3, 2])
    b = CoefficientVector.from_weights([[0], [1], [2]], [5, 15, 10])
    pa, pb = algebraic_potential(a), algebraic_potential(b)
    assert np.allclose(pb.value(T) - pa.value(T), log(5))
    assert np.allclose(pb.hessian(T), pa.hessian(T))


def test_binomial_level_two_is_twice_round():
    a = CoefficientVector.from_weights([[0], [1], [2]], [1, 2, 1], level=2)
    phi = algebraic_potential(a, normalized=True)
    assert np.allclose(2 * phi.value(T), 2 * np.log1p(np.exp(T[:, 0])), atol=1e-13)
    assert np.allclose(phi.value(T), np.log1p(np.exp(T[:, 0])), atol=1e-13)


def test_degenerate_support_and_bad_weights():
    with pytest.raises(DegenerateSupport):
        algebraic_potential(CoefficientVector.from_weights([[0, 0], [1, 1], [2, 2]], [1, 1, 1]))
    with pytest.raises(ValidationError):
        CoefficientVector.from_weights([[0], [1]], [1, 0])
    with pytest.raises(ValidationError):
        CoefficientVector.from_weights([[0], [1]], [1, 1], level=0)


def test_hessian_two_paths():
    rng = np.random.default_rng(0)
    pts = [[0, 0], [1, 0], [0, 1], [1, 1], [2, 0]]
    a = CoefficientVector.from_weights(pts, list(rng.uniform(0.5, 3, len(pts))))
    phi = algebraic_potential(a)
    X = rng.normal(size=(20, 2))
    H = phi.hessian(X)
    assert np.allclose(H, complex_step_hessian(phi, X), atol=1e-10)
    assert np.all(np.linalg.eigvalsh(H) > 0)


def test_convolution_binomials_exact():
    a = CoefficientVector.from_weights([[0], [1]], [1, 1])
    for k in (1, 2, 5, 12):
        b = veronese_convolution(a, k)
        assert list(b.exact) == binomial_reference(k)
    # Pascal recursion as an independent oracle
    row = [1]
    for _ in range(20):
        row = [x + y for x, y in zip([0] + row, row + [0])]
    assert list(veronese_convolution(a, 20).exact) == row


def test_convolution_identity_and_log_space():
    a = CoefficientVector.from_weights([[0], [1], [2]], [Fraction(1, 3), Fraction(2), Fraction(5, 7)])
    assert veronese_convolution(a, 1).exact == a.exact
    floaty = CoefficientVector(1, a.points, a.log_weights)
    exact, approx = veronese_convolution(a, 9), veronese_convolution(floaty, 9)
    assert np.allclose(exact.log_weights, approx.log_weights, rtol=1e-12)


def test_central_limit_rate():
    a = CoefficientVector.from_weights([[0], [1]], [1, 1])
    for nu in NUS:
        gaps = []
        for k in KS:
            b = veronese_convolution(a, k)
            gaps.append(abs(-b.log_weight([int(nu * k)]) / k - entropy(nu)))
        assert all(g <= 2 * log(k) / k for g, k in zip(gaps, KS))
        assert all(x > y for x, y in zip(gaps, gaps[1:]))


def test_torus_constant_term():
    for weights in ([1, 1, 1], [2, 3, 2], [1, 4, 1]):
        a = CoefficientVector.from_weights([[-1], [0], [1]], weights)
        for k in (3, 6, 9):
            exact = veronese_convolution(a, k).exact
            b0 = exact[k]          # μ = 0 sits in the middle of −k..k
            assert abs(constant_term_by_quadrature(a, k) - b0) <= 1e-8 * b0


@pytest.mark.parametrize("nu", NUS)
def test_l2_rate_on_round_sphere(sphere_u, nu):
    gaps = [abs(l2_log_integral(sphere_u, [nu], k) / k - entropy(nu)) for k in KS]
    assert all(g <= 2 * log(k) / k for g, k in zip(gaps, KS))
    assert all(x > y for x, y in zip(gaps, gaps[1:]))


def test_l2_routes_agree(sphere_u):
    for k in (4, 16):
        d = l2_log_integral(sphere_u, [0.3], k, "dual")
        p = l2_log_integral(sphere_u, [0.3], k, "primal")
        assert abs(d - p) < 1e-6 * max(1, abs(d))


def test_laplace_ratio_tends_to_one(sphere_u, square):
    from toric_kahler.potential import guillemin_potential
    for u, nu in ((sphere_u, [0.3]), (guillemin_potential(square), [0.4, 0.6])):
        errs = [abs(np.expm1(l2_log_integral(u, nu, k) - laplace_log_approximation(u, nu, k))) for k in KS]
        assert all(x > y for x, y in zip(errs, errs[1:]))
        assert all(k * e < 2 for k, e in zip(KS, errs))     # first-order correction is O(1/k)


def test_minus_log_a_convex(square):
    from toric_kahler.potential import guillemin_potential
    a = l2_coefficients(guillemin_potential(square), 4)
    la = {tuple(m): lw for m, lw in a.to_rows()}
    checked = 0
    for m in la:
        for d in ((1, 0), (0, 1), (1, 1), (1, -1)):
            lo, hi = tuple(np.subtract(m, d)), tuple(np.add(m, d))
            if lo in la and hi in la:
                assert -la[m] <= 0.5 * (-la[lo] - la[hi]) + 1e-12
                checked += 1
    assert checked > 10


def test_l2_coefficients_cover_boundary(sphere_u):
    a = l2_coefficients(sphere_u, 6, threads=2)
    assert a.points[:, 0].tolist() == list(range(7))
    assert np.all(np.isfinite(a.log_weights))


def test_density_roundtrip_round_sphere(sphere_u):
    # the round metric is itself algebraic, so the roundtrip is exact up to rounding
    assert all(density_roundtrip(sphere_u, k).error < 1e-12 for k in (8, 16, 32))


def test_density_roundtrip_perturbed_decreases(interval):
    from toric_kahler.potential import random_admissible_perturbation
    u = random_admissible_perturbation(interval, 0)
    errs = [density_roundtrip(u, k).error for k in (8, 16, 32)]
    assert all(x > y for x, y in zip(errs, errs[1:]))


def test_density_roundtrip_shift_invariant(sphere_u):
    shifted = sphere_u.with_correction(AffineFunction(2.5, (0.0,)))
    assert abs(density_roundtrip(sphere_u, 8).error - density_roundtrip(shifted, 8).error) < 1e-10
