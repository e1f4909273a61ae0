"""Atomic measures matching a target moment vector.

Nonnegative weights on a candidate grid are fitted to the moments by
nonnegative least squares; Caratheodory pruning then removes atoms along
null directions of the monomial matrix until no more than ``s_{2n}``
(fewer when the atoms lie on an algebraic variety) remain.
"""

from __future__ import annotations

import logging

import numpy as np
from scipy.optimize import nnls

from .basis import dim_poly, vandermonde
from .equilibrium import (CubatureRule, SemiAlgebraicSet, equilibrium_moments, gauss_chebyshev,
                          tensor_chebyshev)
from .errors import InfeasibleGridError, UnsupportedKindError
from .moments import MomentVector

log = logging.getLogger(__name__)

FEASIBLE_RESIDUAL = 1e-6
NULL_RTOL = 1e-13


def _frame_of(points):
    lo, hi = points.min(axis=0), points.max(axis=0)
    center = (lo + hi) / 2
    scale = np.where(hi > lo, (hi - lo) / 2, 1.0)
    return center, scale


def fit_weights(grid, target: MomentVector, degree: int | None = None):
    """Nonnegative weights on ``grid`` reproducing ``target`` to ``degree``.

    Rows of the moment system are scaled by ``1 / max(|target_alpha|, 1)``.
    Returns ``(weights, residual)`` with the max-abs moment residual; raises
    :class:`InfeasibleGridError` if that exceeds 1e-6.
    """
    pts = np.asarray(getattr(grid, "points", grid), dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(-1, target.dim) if target.dim > 1 else pts.reshape(-1, 1)
    degree = target.degree if degree is None else degree
    A = vandermonde(pts, degree, target.dim).T
    b = target.values[:A.shape[0]]
    rows = 1.0 / np.maximum(np.abs(b), 1.0)
    rank = np.linalg.matrix_rank(A * rows[:, None])
    if rank < A.shape[0]:
        log.info("grid monomial matrix has rank %d < %d", rank, A.shape[0])
    w, _ = nnls(A * rows[:, None], b * rows, maxiter=50 * A.shape[1])
    residual = float(np.max(np.abs(A @ w - b)))
    if residual > FEASIBLE_RESIDUAL:
        raise InfeasibleGridError(
            f"no nonnegative weights on {pts.shape[0]} grid points match the moments to degree "
            f"{degree} (residual {residual:.2e}); use a denser grid")
    return w, residual


def caratheodory_prune(atoms, weights, degree: int, return_info: bool = False):
    """Remove atoms while preserving all moments up to ``degree``.

    Atoms enter one at a time into a working set; whenever the working set
    has a (numerically) null direction of its monomial matrix, weights move
    along it until the atom with the smallest weight-to-step ratio drops
    out.  At most ``s_degree`` atoms survive.
    """
    X = np.asarray(atoms, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    w = np.asarray(weights, dtype=float).copy()
    d = X.shape[1]
    s = dim_poly(d, degree)
    keep = w > 0
    X, w = X[keep], w[keep]
    info = {"fully_pruned": True, "eliminated": 0}
    if X.shape[0] == 0:
        return (X, w, info) if return_info else (X, w)
    center, scale = _frame_of(X)
    V = vandermonde((X - center) / scale, degree, d)
    order = np.argsort(-w, kind="stable")
    active: list[int] = []
    for idx in order:
        active.append(int(idx))
        while len(active) > 1:
            A = V[active].T
            _, sv, vt = np.linalg.svd(A, full_matrices=True)
            if len(active) > s:
                v = vt[-1]
            else:
                smin = sv[-1] if sv.size == len(active) else 0.0
                if smin > NULL_RTOL * max(sv[0], 1.0):
                    break
                v = vt[-1]
            wa = w[active]
            best = None
            for sign in (1.0, -1.0):
                u = sign * v
                pos = u > 1e-15 * np.abs(u).max()
                if not pos.any():
                    continue
                ratios = wa[pos] / u[pos]
                k = int(np.argmin(ratios))
                t = ratios[k]
                if best is None or t < best[0]:
                    best = (t, u, int(np.flatnonzero(pos)[k]))
            if best is None:
                info["fully_pruned"] = False
                break
            t, u, k = best
            wa = wa - t * u
            wa[k] = 0.0
            wa = np.maximum(wa, 0.0)
            w[active] = wa
            active = [a for a, val in zip(active, wa) if val > 0.0]
            info["eliminated"] += 1
    keep = np.zeros(w.size, dtype=bool)
    keep[active] = True
    out_x, out_w = X[keep], w[keep]
    if out_w.size > s:
        info["fully_pruned"] = False
    return (out_x, out_w, info) if return_info else (out_x, out_w)


def cubature_for_equilibrium(S: SemiAlgebraicSet, n: int, grid=None) -> CubatureRule:
    """Positive rule exact to degree 2n for the equilibrium measure of ``S``."""
    from .solver import default_grid

    if not S.builtin:
        raise UnsupportedKindError("cubature for the equilibrium measure needs a built-in set")
    if n < 0:
        raise ValueError("n must be nonnegative")
    if S.kind == "interval" or (S.kind == "box" and S.dim == 1):
        return gauss_chebyshev(n)
    if S.kind == "box":
        return tensor_chebyshev(S.dim, n)
    target = equilibrium_moments(S, 2 * n)
    pts = default_grid(S).points if grid is None else np.asarray(getattr(grid, "points", grid))
    w, fit_residual = fit_weights(pts, target)
    atoms, weights, info = caratheodory_prune(pts, w, 2 * n, return_info=True)
    rule = CubatureRule(atoms, weights, 2 * n, target=target)
    rule.info = {"fit_residual": fit_residual, "residual": rule.moment_residual(),
                 "atoms": len(rule), "grid_size": int(pts.shape[0]), **info}
    return rule
