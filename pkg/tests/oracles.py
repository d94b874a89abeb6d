"""Independent reference computations used by several test files."""

import numpy as np

C_STAR = -0.52761952   # frozen; reproduced by bl1cp2_soliton_grid_search


def _bl1cp2_rule(m=60):
    """Tensor Gauss–Legendre rule on {x>−1, y>−1, x+y<1, x+y>−1} split at x = 0."""
    g, w = np.polynomial.legendre.leggauss(m)
    pts, wts = [], []
    for (x0, x1, lo, hi) in ((-1.0, 0.0, lambda x: -1 - x, lambda x: 1 - x),
                             (0.0, 2.0, lambda x: -1 + 0 * x, lambda x: 1 - x)):
        xs = (x1 - x0) / 2 * g + (x1 + x0) / 2
        wx = (x1 - x0) / 2 * w
        for xi, wi in zip(xs, wx):
            a, b = lo(xi), hi(xi)
            ys = (b - a) / 2 * g + (b + a) / 2
            pts.append(np.stack([np.full(m, xi), ys], 1))
            wts.append(wi * (b - a) / 2 * w)
    return np.concatenate(pts), np.concatenate(wts)


def bl1cp2_soliton_grid_search():
    """Minimize F(c) = ∫ e^{c·x} over c ∈ [−1,1]² by successively refined grid search."""
    X, W = _bl1cp2_rule()
    lo, hi, step = np.array([-1.0, -1.0]), np.array([1.0, 1.0]), 0.05
    for _ in range(6):
        axes = [np.arange(lo[i], hi[i] + step / 2, step) for i in range(2)]
        C = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, 2)
        vals = np.exp(C @ X.T) @ W
        best = C[np.argmin(vals)]
        lo, hi, step = best - 2 * step, best + 2 * step, step / 10
    return best
