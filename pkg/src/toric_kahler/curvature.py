"""Curvature in symplectic coordinates: Abreu's scalar curvature, the tensors
F and G, |F|², and the weighted Abreu operator."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NonpositiveWeight, SingularHessian
from .potential import GridFunction, INTERIOR, SymplecticPotential
from .threads import worker_count


@dataclass(frozen=True)
class InverseHessianJet:
    """U = (∇²u)⁻¹ with first and second derivatives at a batch of points."""

    H: np.ndarray       # (N,n,n)
    U: np.ndarray       # (N,n,n)
    dU: np.ndarray      # (N,k,i,j) = ∂_k U^{ij}
    ddU: np.ndarray     # (N,k,l,i,j) = ∂_k ∂_l U^{ij}
    T3: np.ndarray
    T4: np.ndarray


def inverse_hessian_jet(u: SymplecticPotential, X) -> InverseHessianJet:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    _, _, H, T3, T4 = u.derivatives(X, 4)
    _check_pd(H, X)
    U = np.linalg.inv(H)
    # ∂_k U = −U T3_k U, ∂_k∂_l U = U T3_l U T3_k U + U T3_k U T3_l U − U T4_kl U
    A = np.einsum("nia,nkab,nbj->nkij", U, T3, U)
    dU = -A
    AHA = np.einsum("nlia,nab,nkbj->nklij", A, H, A)
    ddU = AHA + AHA.transpose(0, 2, 1, 3, 4) - np.einsum("nia,nklab,nbj->nklij", U, T4, U)
    return InverseHessianJet(H, U, dU, ddU, T3, T4)


def _check_pd(H, X):
    try:
        np.linalg.cholesky(H)
    except np.linalg.LinAlgError:
        eig = np.linalg.eigvalsh(H)[:, 0]
        bad = int(np.argmin(eig))
        raise SingularHessian(np.asarray(X)[bad].tolist()) from None
    if not np.all(np.isfinite(H)):
        bad = int(np.argmax(~np.isfinite(H).reshape(len(H), -1).all(axis=1) == 1))
        raise SingularHessian(np.asarray(X)[bad].tolist(), "non-finite Hessian")


def abreu_scalar(u: SymplecticPotential, X, method: str = "analytic", h: float = 1e-3):
    """S = −Σ_ij ∂²U^{ij}/∂x_i∂x_j at each row of X.

    method="analytic" differentiates U through closed-form third and fourth
    derivatives of u; method="stencil" applies fourth-order finite differences
    to the assembled U field with step h (one-sided near ∂P).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if method == "analytic":
        jet = inverse_hessian_jet(u, X)
        return -np.einsum("niijj->n", jet.ddU.transpose(0, 1, 3, 2, 4))
    if method == "stencil":
        return np.array([_stencil_scalar(u, x, h) for x in X])
    raise ValueError(f"unknown method {method!r}")


def fd_weights(offsets, deriv: int) -> np.ndarray:
    """Finite-difference weights on integer offsets for the given derivative."""
    offsets = np.asarray(offsets, dtype=float)
    m = len(offsets)
    V = np.vander(offsets, m, increasing=True).T
    rhs = np.zeros(m)
    from math import factorial
    rhs[deriv] = factorial(deriv)
    return np.linalg.solve(V, rhs)


def _axis_offsets(inside: Callable[[np.ndarray], bool], x, axis, h, deriv, width):
    """Centered offsets when they stay inside P, else shifted one-sided ones."""
    n = len(x)
    m = width
    base = np.arange(m) - (m - 1) // 2 if m % 2 else np.arange(m) - m // 2
    candidates = [base] + [base + s for k in range(1, m) for s in (k, -k)]
    for offs in candidates:
        pts = np.array([x + o * h * np.eye(n)[axis] for o in offs])
        if inside(pts):
            return offs
    raise SingularHessian(x.tolist(), "no stencil fits inside P")


def _stencil_scalar(u, x, h):
    P = u.polytope
    n = len(x)

    def inside(pts):
        return bool(np.all(P.contains(pts)))

    def U_at(pts):
        H = u.hessian(pts)
        _check_pd(H, pts)
        return np.linalg.inv(H)

    total = 0.0
    for i in range(n):
        for j in range(n):
            if i == j:
                offs = _axis_offsets(inside, x, i, h, 2, 5 if _centered_ok(inside, x, i, h, 2) else 6)
                w = fd_weights(offs, 2)
                pts = np.array([x + o * h * np.eye(n)[i] for o in offs])
                total += w @ U_at(pts)[:, i, i] / h ** 2
            else:
                oi = _axis_offsets(inside, x, i, h, 1, 5)
                oj = _axis_offsets(inside, x, j, h, 1, 5)
                wi, wj = fd_weights(oi, 1), fd_weights(oj, 1)
                pts = np.array([x + a * h * np.eye(n)[i] + b * h * np.eye(n)[j] for a in oi for b in oj])
                if not inside(pts):
                    raise SingularHessian(x.tolist(), "mixed stencil leaves P")
                vals = U_at(pts)[:, i, j].reshape(len(oi), len(oj))
                total += wi @ vals @ wj / h ** 2
    return -total


def _centered_ok(inside, x, axis, h, deriv):
    n = len(x)
    pts = np.array([x + o * h * np.eye(n)[axis] for o in range(-2, 3)])
    return inside(pts)


@dataclass(frozen=True)
class CurvatureSample:
    """Curvature data at one point.

    G is the Ricci-equivalent tensor ∂²L − u_{ijq}u^{qc}∂_cL, which equals the
    contraction −F_{ikjl}u^{kl}; its trace against u^{ij} is S.
    """

    point: tuple
    S: float
    G: np.ndarray
    F: np.ndarray
    normF2: float
    L: float
    G_from_L: np.ndarray
    hessian_L: np.ndarray


def curvature_tensor(u: SymplecticPotential, x) -> CurvatureSample:
    x = np.asarray(x, dtype=float).reshape(1, -1)
    jet = inverse_hessian_jet(u, x)
    H, U, T3, T4, ddU = jet.H[0], jet.U[0], jet.T3[0], jet.T4[0], jet.ddU[0]
    # F_ijkl = u_ia u_jb ∂_k∂_l u^{ab}
    F = np.einsum("ia,jb,klab->ijkl", H, H, ddU)
    G = -np.einsum("ikjl,kl->ij", F, U)
    dL = np.einsum("ab,kba->k", U, T3)
    hessL = np.einsum("ab,klba->kl", U, T4) - np.einsum("ab,kbc,cd,lda->kl", U, T3, U, T3)
    G_L = hessL - np.einsum("ijq,qc,c->ij", T3, U, dL)
    S = float(-np.einsum("iijj->", ddU.transpose(0, 2, 1, 3)))
    normF2 = float(np.einsum("ijkl,abcd,ia,jb,kc,ld->", F, F, U, U, U, U))
    L = float(np.linalg.slogdet(H)[1])
    return CurvatureSample(tuple(x[0]), S, G, F, normF2, L, G_L, hessL)


WeightFunction = Callable[[np.ndarray], tuple[np.ndarray, np.ndarray, np.ndarray]]


def weighted_abreu(u: SymplecticPotential, W: WeightFunction, sigma, X):
    """S_W = −(1/W) ∂_i∂_j(W U^{ij}) + W_i σ^i / W.

    W maps points (N,n) to (W, DW, D²W).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    w, dw, ddw = W(X)
    w = np.asarray(w, dtype=float)
    if np.any(w <= 0):
        raise NonpositiveWeight(f"weight is not positive at {X[np.argmin(w)].tolist()}")
    jet = inverse_hessian_jet(u, X)
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), X.shape)
    div_U = np.einsum("njij->ni", jet.dU)                       # ∂_j U^{ij}
    second = np.einsum("nijij->n", jet.ddU)                     # ∂_i∂_j U^{ij}
    total = (np.einsum("nij,nij->n", ddw, jet.U) + 2 * np.einsum("ni,ni->n", dw, div_U)
             + w * second)
    return -total / w + np.einsum("ni,ni->n", dw, sigma) / w


FIELDS = ("S", "L", "normF2")


def curvature_field(u: SymplecticPotential, grid: GridFunction, fields=("S",),
                    threads: int | None = None) -> dict[str, GridFunction]:
    """Evaluate scalar curvature fields at interior grid nodes (NaN elsewhere)."""
    for f in fields:
        if f not in FIELDS:
            raise ValueError(f"unknown field {f!r}")
    pts = grid.points
    mask = grid.flags.ravel() == INTERIOR
    X = pts[mask]
    out = {f: np.full(len(pts), np.nan) for f in fields}
    if len(X) == 0:
        return {f: grid.with_values(v) for f, v in out.items()}
    chunks = np.array_split(np.arange(len(X)), max(1, min(len(X) // 256, worker_count(threads) * 4)))

    def work(idx):
        res = {}
        if "S" in fields:
            res["S"] = abreu_scalar(u, X[idx])
        if "L" in fields:
            res["L"] = np.linalg.slogdet(u.hessian(X[idx]))[1]
        if "normF2" in fields:
            res["normF2"] = np.array([curvature_tensor(u, x).normF2 for x in X[idx]])
        return idx, res

    with ThreadPoolExecutor(worker_count(threads)) as pool:
        for idx, res in pool.map(work, chunks):
            for f, v in res.items():
                out[f][np.flatnonzero(mask)[idx]] = v
    return {f: grid.with_values(v) for f, v in out.items()}
