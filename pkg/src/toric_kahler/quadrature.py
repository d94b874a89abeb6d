"""One-dimensional Gauss rules and their collapsed/graded products on simplices."""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre


@lru_cache(maxsize=None)
def gauss_legendre01(q: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = roots_legendre(q)
    return (x + 1) / 2, w / 2


@lru_cache(maxsize=None)
def gauss_jacobi_r01(q: int) -> tuple[np.ndarray, np.ndarray]:
    """Rule for ∫_0^1 g(r) r dr, exact for deg g ≤ 2q-1."""
    x, w = roots_jacobi(q, 0.0, 1.0)
    return (x + 1) / 2, w / 4


def composite(breaks: np.ndarray, q: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = gauss_legendre01(q)
    a, b = breaks[:-1], breaks[1:]
    nodes = (a[:, None] + (b - a)[:, None] * x[None, :]).ravel()
    weights = ((b - a)[:, None] * w[None, :]).ravel()
    return nodes, weights


@lru_cache(maxsize=None)
def graded01(q: int, levels: int, ratio: float, left: bool, right: bool):
    """Composite Gauss-Legendre on [0,1] with geometric refinement toward chosen ends.

    Resolves integrable endpoint singularities such as log(1-r) to near machine
    precision.
    """
    if left and right:
        half = 0.5 * ratio ** np.arange(levels + 1)
        breaks = np.concatenate(([0.0], half[::-1], 1 - half[1:]))
        breaks = np.unique(np.concatenate((breaks, [1.0])))
    elif right:
        breaks = np.concatenate(([0.0], 1 - ratio ** np.arange(1, levels + 1), [1.0]))
    elif left:
        breaks = np.concatenate(([0.0], ratio ** np.arange(levels, 0, -1), [1.0]))
    else:
        breaks = np.array([0.0, 1.0])
    nodes, weights = composite(np.asarray(breaks), q)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def segment_rule(q: int, graded: bool = False, levels: int = 20, ratio: float = 0.25):
    """Nodes/weights on [0,1]; graded toward both ends when requested."""
    if graded:
        return graded01(q, levels, ratio, True, True)
    return gauss_legendre01(q)


def collapsed_triangle(apex, a, b, q: int, graded: bool = False,
                       levels: int = 20, ratio: float = 0.25):
    """Rule on the triangle (apex, a, b) with r = 0 at the apex and r = 1 on edge ab.

    Returns nodes (N, 2), weights (N,), and the edge parameter r at each node, so
    that a facet slack vanishing on ab equals its apex value times (1 - r).
    """
    apex, a, b = (np.asarray(p, dtype=float) for p in (apex, a, b))
    area2 = abs((a[0] - apex[0]) * (b[1] - apex[1]) - (a[1] - apex[1]) * (b[0] - apex[0]))
    if graded:
        r, wr = graded01(q, levels, ratio, False, True)
        wr = wr * r
        s, ws = graded01(q, levels, ratio, True, True)
    else:
        r, wr = gauss_jacobi_r01(q)
        s, ws = gauss_legendre01(q)
    R, S = np.meshgrid(r, s, indexing="ij")
    W = np.outer(wr, ws) * area2
    edge = (1 - S)[..., None] * (a - apex) + S[..., None] * (b - apex)
    pts = apex + R[..., None] * edge
    return pts.reshape(-1, 2), W.ravel(), R.ravel()


def collapsed_segment(apex: float, end: float, q: int, graded: bool = False,
                      levels: int = 20, ratio: float = 0.25):
    """Rule on the segment from apex (r = 0) to end (r = 1)."""
    if graded:
        r, w = graded01(q, levels, ratio, False, True)
    else:
        r, w = gauss_legendre01(q)
    length = abs(end - apex)
    return (apex + r * (end - apex))[:, None], w * length, r.copy()
