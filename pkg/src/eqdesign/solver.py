"""Approximate optimal designs on candidate grids.

Weights over a finite grid are driven towards the maximizer of the
concave log-det objective by multiplicative updates with a halving
safeguard and periodic vertex exchanges.  A continuous polish then moves
atoms and weights jointly, and new local maximizers of the variance
function are added as candidate atoms until the equivalence gap closes.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular
from scipy.optimize import minimize

from .basis import Polynomial, dim_poly, monomial_basis, vandermonde, vandermonde_grad
from .christoffel import PIVOT_RTOL, VarianceFunction, _frame_logdet_shift, set_frame
from .equilibrium import (SemiAlgebraicSet, chebyshev_nodes, description_family, family_trace,
                          variant_family)
from .errors import NumericalError, SingularMomentMatrixError
from .moments import MomentVector

log = logging.getLogger(__name__)

OBJECTIVES = ("classical", "variant")
PRUNE_WEIGHT = 1e-10
MAX_HALVINGS = 30
EXCHANGE_EVERY = 50
NEG_INF = float("-inf")


def normalize_objective(kind: str) -> str:
    k = str(kind).lower()
    if k in ("classic", "classical", "d", "d-optimal"):
        return "classical"
    if k == "variant":
        return "variant"
    raise ValueError(f"unknown objective {kind!r}; expected 'classical' or 'variant'")


def objective_family(S: SemiAlgebraicSet, n: int, kind: str):
    """``[(g, d_g)]`` whose blocks enter the objective."""
    if normalize_objective(kind) == "classical":
        return [(Polynomial.constant(S.dim), 0)]
    return variant_family(S, n)


# data types

@dataclass
class DesignMeasure:
    """Atomic probability measure ``sum_i w_i delta_{x_i}``."""

    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=float)
        if atoms.ndim == 1:
            atoms = atoms.reshape(-1, 1)
        w = np.asarray(self.weights, dtype=float).ravel()
        if atoms.shape[0] != w.size:
            raise ValueError(f"{atoms.shape[0]} atoms but {w.size} weights")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("design weights must be finite and nonnegative")
        total = w.sum()
        if total <= 0:
            raise ValueError("design weights sum to zero")
        self.atoms = atoms
        self.weights = w / total

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    def __len__(self):
        return self.weights.size

    def pruned(self, threshold: float = PRUNE_WEIGHT) -> "DesignMeasure":
        keep = self.weights >= threshold
        return DesignMeasure(self.atoms[keep], self.weights[keep])

    def moments(self, degree: int) -> MomentVector:
        return MomentVector.from_atoms(self.atoms, self.weights, degree)

    def check_support(self, S: SemiAlgebraicSet, tol: float = 1e-9) -> bool:
        return bool(np.all(S.contains(self.atoms, tol)))

    def to_json(self) -> dict:
        return {"atoms": self.atoms.tolist(), "weights": self.weights.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "DesignMeasure":
        return cls(np.asarray(obj["atoms"], dtype=float), np.asarray(obj["weights"], dtype=float))


@dataclass
class CandidateGrid:
    points: np.ndarray
    provenance: str = "user"

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if self.points.ndim == 1:
            self.points = self.points.reshape(-1, 1)

    def __len__(self):
        return self.points.shape[0]

    def validate(self, S: SemiAlgebraicSet, tol: float = 1e-9) -> "CandidateGrid":
        if self.points.shape[1] != S.dim:
            raise ValueError(f"grid points have {self.points.shape[1]} coordinates, set has {S.dim}")
        bad = ~S.contains(self.points, tol)
        if bad.any():
            raise ValueError(f"{int(bad.sum())} grid points violate the set's generators")
        return self


@dataclass
class SolveReport:
    objective: float
    gap: float
    support_residual: float
    iterations: int
    grid_size: int
    block_dims: list
    converged: bool
    objective_kind: str = "classical"
    trace: int = 0
    halvings: int = 0
    nonmonotone_steps: int = 0
    restarts: int = 0
    polish_rounds: int = 0
    seconds: float = 0.0
    notes: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "objective": self.objective, "gap": self.gap,
            "support_residual": self.support_residual, "iterations": self.iterations,
            "grid_size": self.grid_size, "block_dims": self.block_dims,
            "converged": self.converged, "objective_kind": self.objective_kind,
            "trace": self.trace, "halvings": self.halvings,
            "nonmonotone_steps": self.nonmonotone_steps, "restarts": self.restarts,
            "polish_rounds": self.polish_rounds, "seconds": self.seconds, "notes": self.notes,
        }


# candidate grids

def _interval_points(m):
    x = np.cos(np.pi * np.arange(m) / (m - 1))
    x[np.abs(x) < 1e-15] = 0.0
    return np.unique(np.concatenate([x, [-1.0, 1.0]]))


def _sphere_directions(d, count, rng=None):
    if d == 2:
        t = 2 * np.pi * np.arange(count) / count
        return np.column_stack([np.cos(t), np.sin(t)])
    if d == 3:
        # Fibonacci lattice
        i = np.arange(count) + 0.5
        z = 1 - 2 * i / count
        r = np.sqrt(1 - z * z)
        phi = np.pi * (3 - np.sqrt(5)) * i
        return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])
    rng = np.random.default_rng(0) if rng is None else rng
    u = rng.standard_normal((count, d))
    return u / np.linalg.norm(u, axis=1, keepdims=True)


def _simplex_lattice(d, m):
    pts = []

    def rec(prefix, remaining):
        if len(prefix) == d:
            pts.append(prefix)
            return
        for k in range(remaining + 1):
            rec(prefix + [k], remaining - k)

    rec([], m)
    return np.array(pts, dtype=float) / m


def default_grid(S: SemiAlgebraicSet, density: float = 1.0, size: int = 20000,
                 rng=None) -> CandidateGrid:
    """Candidate grid of the set; ``density`` scales the resolution."""
    d = S.dim
    if S.kind == "interval" or (S.kind in ("box", "ball") and d == 1):
        pts = _interval_points(int(512 * density) + 1).reshape(-1, 1)
        return CandidateGrid(pts, "tensor-chebyshev")
    if S.kind == "box":
        per_axis = min(int(512 * density) + 1, int(math.floor((1e5 * density) ** (1.0 / d))))
        x = _interval_points(max(per_axis, 3))
        grids = np.meshgrid(*([x] * d), indexing="ij")
        return CandidateGrid(np.column_stack([g.ravel() for g in grids]), "tensor-chebyshev")
    if S.kind == "ball":
        n_r = int(64 * density) + 1 if d == 2 else int(24 * density) + 1
        n_a = int(128 * density) if d == 2 else int(400 * density)
        radii = np.sin(np.pi * np.arange(1, n_r) / (2 * (n_r - 1)))
        dirs = _sphere_directions(d, n_a, rng)
        pts = [np.zeros((1, d))] + [r * dirs for r in radii]
        pts.append(_sphere_directions(d, 2 * n_a, rng))
        pts = np.vstack(pts)
        pts /= np.maximum(1.0, np.linalg.norm(pts, axis=1))[:, None]
        return CandidateGrid(pts, "boundary-augmented")
    if S.kind == "simplex":
        m = int(64 * density) if d <= 2 else int(24 * density)
        return CandidateGrid(_simplex_lattice(d, max(m, 2)), "boundary-augmented")
    return custom_grid(S, size=int(size * density), rng=rng)


def custom_grid(S: SemiAlgebraicSet, size: int = 20000, rng=None,
                boundary_fraction: float = 0.2) -> CandidateGrid:
    """Rejection sample in the bounding box, plus bisected points on the boundary."""
    rng = np.random.default_rng(0) if rng is None else rng
    lo = np.array([b[0] for b in S.bbox])
    hi = np.array([b[1] for b in S.bbox])
    inside = []
    count, tries = 0, 0
    while count < size and tries < 50:
        cand = rng.uniform(lo, hi, size=(4 * size, S.dim))
        ok = cand[S.contains(cand, 0.0)]
        inside.append(ok)
        count += ok.shape[0]
        tries += 1
    pts = np.vstack(inside)[:size] if inside else np.zeros((0, S.dim))
    if pts.shape[0] == 0:
        raise ValueError("no sampled point of the bounding box satisfies the set's generators")
    center = pts.mean(axis=0)
    if not S.contains(center[None, :], 0.0)[0]:
        center = pts[np.argmin(np.linalg.norm(pts - center, axis=1))]
    nb = max(int(boundary_fraction * size), 2 * S.dim)
    dirs = rng.standard_normal((nb, S.dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    reach = np.linalg.norm(hi - lo)
    boundary = _bisect_boundary(S, center, dirs, reach)
    # tensor points of the box catch corners of polytopes that sampling misses
    per_axis = max(3, min(65, int(math.floor(size ** (1.0 / S.dim)))))
    axes = [lo[i] + (hi[i] - lo[i]) * (_interval_points(per_axis) + 1) / 2 for i in range(S.dim)]
    mesh = np.column_stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")])
    mesh = mesh[S.contains(mesh, 1e-12)]
    return CandidateGrid(np.vstack([pts, boundary, mesh]), "boundary-augmented")


def _bisect_boundary(S, center, dirs, reach, steps=60):
    a = np.zeros(dirs.shape[0])
    b = np.full(dirs.shape[0], reach)
    for _ in range(steps):
        mid = 0.5 * (a + b)
        ok = S.contains(center + mid[:, None] * dirs, 0.0)
        a = np.where(ok, mid, a)
        b = np.where(ok, b, mid)
    pts = center + a[:, None] * dirs
    return pts[S.contains(pts, 1e-12)]


def _regular(piv, M):
    # same test as the kernel factorization: squared pivots against the trace
    return bool(piv.min() ** 2 > PIVOT_RTOL * np.trace(M))


# grid model: blocks, objective and variance function for weights on fixed points

class _Blocks:
    """Localizing blocks of a weighted point set, in the frame coordinates of ``S``."""

    def __init__(self, S, family, n, points):
        self.S, self.family, self.n = S, list(family), int(n)
        self.center, self.scale = (np.asarray(v, dtype=float) for v in set_frame(S))
        self.local_family = [(g.affine(self.center, self.scale), dg) for g, dg in self.family]
        self.orders = [self.n - dg for _, dg in self.family]
        self.trace = family_trace(self.family, S.dim, self.n)
        self.shift = sum(_frame_logdet_shift(S.dim, k, self.scale) for k in self.orders)
        self.set_points(points)

    def set_points(self, points):
        self.points = np.asarray(points, dtype=float).reshape(-1, self.S.dim)
        y = (self.points - self.center) / self.scale
        self.V = [vandermonde(y, k, self.S.dim) for k in self.orders]
        self.G = [np.maximum(_poly_values(g, y), 0.0) for g, _ in self.local_family]

    def matrices(self, w):
        return [(V * (w * G)[:, None]).T @ V for V, G in zip(self.V, self.G)]

    def evaluate(self, w, need_d=True):
        """``(objective, D at the points)``; ``(-inf, None)`` if a block is singular."""
        f = self.shift
        D = np.zeros(self.points.shape[0]) if need_d else None
        for V, G, M in zip(self.V, self.G, self.matrices(w)):
            try:
                L = np.linalg.cholesky(M)
            except np.linalg.LinAlgError:
                return NEG_INF, None
            piv = np.diag(L)
            if not _regular(piv, M):
                return NEG_INF, None
            f += 2.0 * np.sum(np.log(piv))
            if need_d:
                Y = solve_triangular(L, V.T, lower=True, check_finite=False)
                D += G * np.einsum("ij,ij->j", Y, Y)
        return float(f), D

    def variance(self, w) -> VarianceFunction:
        """Continuous variance function of the weighted points (original coordinates)."""
        mats = self.matrices(w)
        return VarianceFunction.from_matrices(self.family, mats, self.n, self.S.dim,
                                              frame=(self.center, self.scale))


def _poly_values(g, pts):
    if g.degree == 0:
        return np.full(pts.shape[0], g.terms.get((0,) * g.dim, 0.0))
    from .basis import poly_eval
    return np.atleast_1d(poly_eval(g, pts)) if pts.shape[0] == 1 else poly_eval(g, pts)


def objective_value(S: SemiAlgebraicSet, design, n: int, kind: str = "classical",
                    grid=None) -> float:
    """Log-det objective at a design (or at weights over ``grid``).

    Classical: ``log det M_n``; variant: ``sum_g log det M_{n-d_g}(g nu)``.
    A singular block gives ``-inf`` (logged) rather than an exception.
    """
    if grid is not None:
        pts = grid.points if isinstance(grid, CandidateGrid) else np.asarray(grid, dtype=float)
        design = DesignMeasure(pts, design)
    blocks = _Blocks(S, objective_family(S, n, kind), n, design.atoms)
    f, _ = blocks.evaluate(design.weights, need_d=False)
    if f == NEG_INF:
        log.info("objective is -inf: a moment block of the design is singular")
    return f


def objective_from_moments(S: SemiAlgebraicSet, phi: MomentVector, n: int,
                           kind: str = "classical") -> float:
    """Objective evaluated directly from a moment vector."""
    family = objective_family(S, n, kind)
    try:
        D = VarianceFunction(phi, n, family, frame=set_frame(S))
    except SingularMomentMatrixError:
        return NEG_INF
    return D.logdet()


# multiplicative phase

def _multiplicative(blocks, w, tol, max_iter, exchange, deadline=None):
    c = blocks.trace
    f, D = blocks.evaluate(w)
    stats = {"halvings": 0, "nonmonotone": 0, "iterations": 0, "stalled": False}
    it = 0
    for it in range(1, max_iter + 1):
        j = int(np.argmax(D))
        if D[j] - c <= tol * c:
            it -= 1
            break
        cand = w * D / c
        cand /= cand.sum()
        if exchange and it % EXCHANGE_EVERY == 0:
            # vertex-direction step towards the grid maximizer of D
            alpha = (D[j] - c) / (c * max(D[j] - 1.0, 1e-12))
            alpha = min(max(alpha, 0.0), 0.5)
            cand = (1 - alpha) * cand
            cand[j] += alpha
        f_new, D_new = blocks.evaluate(cand)
        t = 1.0
        halvings = 0
        while not (f_new >= f - 1e-12):
            halvings += 1
            if halvings > MAX_HALVINGS:
                break
            t *= 0.5
            trial = (1 - t) * w + t * cand
            f_new, D_new = blocks.evaluate(trial)
            cand_t = trial
        if halvings:
            stats["nonmonotone"] += 1
            stats["halvings"] += halvings
            if halvings > MAX_HALVINGS:
                stats["stalled"] = True
                break
            cand = cand_t
        w, f, D = cand, f_new, D_new
        if deadline is not None and time.monotonic() > deadline:
            break
    stats["iterations"] = it
    return w, f, D, stats


# continuous phase, carried out in the frame coordinates of the set

class _LocalModel:
    """Objective and variance function for atoms ``Y`` (frame coordinates) and weights."""

    def __init__(self, blocks: _Blocks):
        self.dim = blocks.S.dim
        self.family = blocks.local_family
        self.orders = blocks.orders
        self.trace = blocks.trace
        self.shift = blocks.shift
        self.dfamily = [[g.derivative(i) for i in range(self.dim)] for g, _ in self.family]
        self.constraints = [g.affine(blocks.center, blocks.scale) for g in blocks.S.generators]
        self.dconstraints = [[g.derivative(i) for i in range(self.dim)] for g in self.constraints]

    def factor(self, Y, w):
        """Cholesky factors of every block, or None if one is singular."""
        chols = []
        for (g, _), k in zip(self.family, self.orders):
            V = vandermonde(Y, k, self.dim)
            G = np.maximum(_poly_values(g, Y), 0.0)
            M = (V * (w * G)[:, None]).T @ V
            try:
                L = np.linalg.cholesky(M)
            except np.linalg.LinAlgError:
                return None
            if not _regular(np.diag(L), M):
                return None
            chols.append(L)
        return chols

    def logdet(self, chols):
        return self.shift + sum(2.0 * np.sum(np.log(np.diag(L))) for L in chols)

    def variance(self, chols, Y, grad=True):
        Y = np.asarray(Y, dtype=float).reshape(-1, self.dim)
        val = np.zeros(Y.shape[0])
        gr = np.zeros_like(Y)
        for (g, _), k, L, dg in zip(self.family, self.orders, chols, self.dfamily):
            V = vandermonde(Y, k, self.dim)
            Z = solve_triangular(L, V.T, lower=True, check_finite=False)
            K = np.einsum("ij,ij->j", Z, Z)
            gv = _poly_values(g, Y)
            val += gv * K
            if grad:
                MinvV = solve_triangular(L.T, Z, lower=False, check_finite=False)
                J = vandermonde_grad(Y, k, self.dim)
                gK = 2.0 * np.einsum("mds,sm->md", J, MinvV)
                gr += gv[:, None] * gK
                for i in range(self.dim):
                    gr[:, i] += _poly_values(dg[i], Y) * K
        return val, gr

    def constraint_values(self, Y):
        Y = np.asarray(Y, dtype=float).reshape(-1, self.dim)
        if not self.constraints:
            return np.zeros((Y.shape[0], 0))
        return np.column_stack([_poly_values(g, Y) for g in self.constraints])

    def constraint_grads(self, Y):
        # shape (points, constraints, dim)
        Y = np.asarray(Y, dtype=float).reshape(-1, self.dim)
        out = np.zeros((Y.shape[0], len(self.constraints), self.dim))
        for j, dg in enumerate(self.dconstraints):
            for i in range(self.dim):
                out[:, j, i] = _poly_values(dg[i], Y)
        return out


def _maximize(value_grad, cons_val, cons_grad, bounds, starts, max_starts=40):
    """Constrained local maximizers of a scalar field, one SLSQP run per start.

    ``value_grad(Y)`` returns values and gradients at the rows of ``Y``;
    ``cons_val``/``cons_grad`` describe ``g_j >= 0`` (or are None).
    """
    starts = np.asarray(starts, dtype=float)
    d = starts.shape[1]
    found = []
    for y0 in starts[:max_starts]:
        def fun(y):
            v, g = value_grad(y[None, :])
            return -v[0], -g[0]

        cons = []
        if cons_val is not None:
            cons.append({"type": "ineq", "fun": lambda y: cons_val(y[None, :])[0],
                         "jac": lambda y: cons_grad(y[None, :])[0]})
        try:
            res = minimize(fun, y0, jac=True, method="SLSQP", bounds=bounds,
                           constraints=cons, options={"maxiter": 100, "ftol": 1e-14})
        except (ValueError, np.linalg.LinAlgError):
            continue
        y = np.clip(res.x, [b[0] for b in bounds], [b[1] for b in bounds])
        if cons_val is not None and cons_val(y[None, :]).min() < 0.0:
            y = _settle(cons_val, cons_grad, y0, y)
            if np.isnan(y).any():
                continue
        found.append(y)
    if not found:
        return np.zeros((0, d)), np.zeros(0)
    Y = np.array(found)
    vals, _ = value_grad(Y)
    return Y, vals


def _local_maxima(model, chols, starts, max_starts=40):
    """Local maximizers of D in frame coordinates."""
    cv = model.constraint_values if model.constraints else None
    return _maximize(lambda Y: model.variance(chols, Y), cv, model.constraint_grads,
                     _safety_bounds(model), starts, max_starts)


def _safety_bounds(model):
    # the generators already confine atoms; coinciding bounds would make the
    # active constraints degenerate at corners, so bounds only guard custom sets
    return [(-1.0, 1.0) if not model.constraints else (-2.0, 2.0)] * model.dim


def _project_inside(cons_val, cons_grad, y, steps=8):
    """Newton steps onto violated constraints; None if ``y`` stays outside."""
    y = y.copy()
    for _ in range(steps):
        g = cons_val(y[None, :])[0]
        if g.min() >= 0.0:
            return y
        G = cons_grad(y[None, :])[0]
        for j in np.flatnonzero(g < 0.0):
            nrm = G[j] @ G[j]
            if nrm > 0:
                y = y - (g[j] - 1e-15) / nrm * G[j] * (1 + 1e-12)
    return y if cons_val(y[None, :])[0].min() >= 0.0 else None


def _settle(cons_val, cons_grad, start, end):
    # SLSQP may end marginally outside: project first, else bisect back towards the start
    y = _project_inside(cons_val, cons_grad, end)
    if y is not None and np.max(np.abs(y - end)) <= 1e-6:
        return y
    return _pull_inside(cons_val, start, end)


def _pull_inside(cons_val, inside, outside, steps=50):
    # bisection along the segment from a feasible start to an infeasible end point
    a, b = 0.0, 1.0
    if cons_val(inside[None, :]).min() < -1e-12:
        return np.full_like(inside, np.nan)
    for _ in range(steps):
        m = 0.5 * (a + b)
        if cons_val((inside + m * (outside - inside))[None, :]).min() >= 0.0:
            a = m
        else:
            b = m
    return inside + a * (outside - inside)


def _joint_polish(model, Y, w, maxiter=200):
    """Maximize the objective jointly over atom positions and weights."""
    r, d = Y.shape

    def unpack(z):
        return z[:r * d].reshape(r, d), z[r * d:]

    def fun(z):
        Yz, wz = unpack(z)
        chols = model.factor(Yz, np.maximum(wz, 0.0))
        if chols is None:
            return 1e10, np.zeros_like(z)
        D, gD = model.variance(chols, Yz)
        gy = wz[:, None] * gD
        return -model.logdet(chols), -np.concatenate([gy.ravel(), D])

    cons = [{"type": "eq", "fun": lambda z: np.array([z[r * d:].sum() - 1.0]),
             "jac": lambda z: np.concatenate([np.zeros(r * d), np.ones(r)])[None, :]}]
    m = len(model.constraints)
    if m:
        def cfun(z):
            return model.constraint_values(unpack(z)[0]).ravel()

        def cjac(z):
            Gr = model.constraint_grads(unpack(z)[0])
            J = np.zeros((r * m, r * d + r))
            for i in range(r):
                J[i * m:(i + 1) * m, i * d:(i + 1) * d] = Gr[i]
            return J

        cons.append({"type": "ineq", "fun": cfun, "jac": cjac})
    bounds = _safety_bounds(model) * r + [(0.0, 1.0)] * r
    z0 = np.concatenate([Y.ravel(), w])
    f0 = fun(z0)[0]
    res = minimize(fun, z0, jac=True, method="SLSQP", bounds=bounds, constraints=cons,
                   options={"maxiter": maxiter, "ftol": 1e-15})
    log.debug("joint polish: %s (%d iterations)", res.message, res.nit)
    Yn, wn = unpack(res.x)
    Yn = np.clip(Yn, -2.0, 2.0)
    wn = np.maximum(wn, 0.0)
    wn /= wn.sum()
    if m:
        bad = np.flatnonzero(model.constraint_values(Yn).min(axis=1) < 0.0)
        for i in bad:
            Yn[i] = _settle(model.constraint_values, model.constraint_grads, Y[i], Yn[i])
            if np.isnan(Yn[i]).any():
                return Y, w
    chols = model.factor(Yn, wn)
    if chols is None or -model.logdet(chols) > f0:
        return Y, w
    return Yn, wn


def _merge_atoms(Y, w, radius):
    """Greedy clustering: heaviest atoms absorb unassigned neighbours within ``radius``."""
    order = np.argsort(-w)
    taken = np.zeros(w.size, dtype=bool)
    out_y, out_w = [], []
    for i in order:
        if taken[i]:
            continue
        near = (~taken) & (np.max(np.abs(Y - Y[i]), axis=1) <= radius)
        taken |= near
        ws = w[near].sum()
        out_y.append(w[near] @ Y[near] / ws)
        out_w.append(ws)
    return np.array(out_y), np.array(out_w)


def _reweight(model, Y, w, iters=3000, tol=1e-12):
    """Multiplicative updates restricted to a small atom set."""
    c = model.trace
    for _ in range(iters):
        chols = model.factor(Y, w)
        if chols is None:
            return w
        D, _ = model.variance(chols, Y, grad=False)
        if np.max(np.abs(D[w > 1e-12] - c)) <= tol * c and D.max() <= c * (1 + tol):
            break
        w = w * D / c
        w /= w.sum()
    return w


def gauss_rule(points, weights, m: int):
    """``m``-point Gauss rule of a discrete measure on the line.

    Lanczos with full reorthogonalization yields the Jacobi matrix of the
    measure; its eigen-decomposition gives nodes and weights.  The rule
    reproduces the measure's moments up to degree ``2m - 1``.
    """
    x = np.asarray(points, dtype=float).ravel()
    w = np.asarray(weights, dtype=float).ravel()
    keep = w > 0
    x, w = x[keep], w[keep] / w[keep].sum()
    if m > x.size:
        raise ValueError(f"a {m}-point Gauss rule needs at least {m} support points")
    Q = np.zeros((x.size, m))
    alpha, beta = np.zeros(m), np.zeros(m)
    q = np.sqrt(w)
    prev, b = np.zeros_like(q), 0.0
    for k in range(m):
        Q[:, k] = q
        r = x * q
        alpha[k] = q @ r
        r = r - alpha[k] * q - b * prev
        r -= Q[:, :k + 1] @ (Q[:, :k + 1].T @ r)
        b = np.linalg.norm(r)
        beta[k] = b
        if k + 1 < m and b <= 1e-14:
            raise NumericalError("measure is supported on fewer points than requested")
        prev, q = q, r / b if b > 0 else r
    J = np.diag(alpha) + np.diag(beta[:-1], 1) + np.diag(beta[:-1], -1)
    nodes, vecs = np.linalg.eigh(J)
    return nodes, vecs[0] ** 2


def _design_from_local(blocks, Y, w):
    return DesignMeasure(Y * blocks.scale + blocks.center, w)


def _prune_for_polish(Y, w, degree):
    """Few atoms carrying the same moments to ``degree`` as the grid design."""
    from .cubature import caratheodory_prune, fit_weights

    w = np.where(w >= 1e-10 * w.max(), w, 0.0)
    w /= w.sum()
    target = MomentVector.from_atoms(Y, w, degree)
    try:
        # a basic nonnegative solution has at most s_degree atoms
        v, _ = fit_weights(Y, target)
        keep = v > 0
        return caratheodory_prune(Y[keep], v[keep], degree)
    except NumericalError:
        return caratheodory_prune(Y, w, degree)


def _polish(blocks, Y, w, tol, rounds, grid_local, notes, patience=3):
    """Column generation: reweight, move atoms, add new maximizers of D.

    Returns the iterate with the smallest gap seen; stops at ``0.1 * tol``
    or after ``patience`` rounds without improvement (rounding floor).
    """
    from .cubature import caratheodory_prune

    model = _LocalModel(blocks)
    c = model.trace
    degree = 2 * blocks.n
    best = (np.inf, Y, w)
    stale = 0
    r = 0
    # coalesce the clusters a grid solution leaves around each support point
    Y, w = _merge_atoms(Y, w, 0.1 / (blocks.n + 1))
    for r in range(1, rounds + 1):
        w = _reweight(model, Y, w, 300)
        Y, w = _joint_polish(model, Y, w)
        keep = w > PRUNE_WEIGHT
        Y, w = _merge_atoms(Y[keep], w[keep] / w[keep].sum(), 1e-6)
        if w.size > dim_poly(model.dim, degree):
            Y, w = caratheodory_prune(Y, w, degree)
        chols = model.factor(Y, w)
        if chols is None:
            notes.append("polish produced a singular design")
            break
        Dg, _ = model.variance(chols, grid_local, grad=False)
        starts = np.vstack([Y, grid_local[np.argsort(-Dg)[:20]]])
        Ym, vm = _local_maxima(model, chols, starts)
        top = max(vm.max() if vm.size else -np.inf, Dg.max())
        gap = (top - c) / c
        Ds, _ = model.variance(chols, Y, grad=False)
        sup = np.abs(Ds - c).max() / c
        log.debug("polish round %d: %d atoms, gap %.3e, support residual %.3e",
                  r, len(w), gap, sup)
        score = max(gap, sup)
        if score < best[0]:
            best, stale = (score, Y.copy(), w.copy()), 0
        else:
            stale += 1
        if score <= 0.1 * tol or stale >= patience:
            break
        new = Ym[vm > c * (1 + 0.1 * tol)] if vm.size else np.zeros((0, Y.shape[1]))
        if new.shape[0] == 0:
            new = grid_local[np.argsort(-Dg)[:1]]
        Y = np.vstack([Y, new])
        w = np.concatenate([w, np.full(new.shape[0], 1e-3)])
        Y, w = _merge_atoms(Y, w / w.sum(), 1e-4)
    return best[1], best[2], r


def _better(S, n, kind, incumbent, candidate, rng, notes, slack=1e-6):
    """Prefer the candidate unless it is clearly worse in objective or gap."""
    f_inc = objective_value(S, incumbent, n, kind)
    f_new = objective_value(S, candidate, n, kind)
    if f_new > f_inc + slack:
        return candidate
    if f_new < f_inc - slack:
        notes.append("polish did not improve on the grid design")
        return incumbent
    # objectives agree to rounding: decide on the certificate
    g_inc = equivalence_gap(S, incumbent, n, kind, rng=rng).gap
    g_new = equivalence_gap(S, candidate, n, kind, rng=rng).gap
    if g_new <= g_inc:
        return candidate
    notes.append("polish did not improve on the grid design")
    return incumbent


def solve_design(S: SemiAlgebraicSet, n: int, objective: str = "classical", grid=None,
                 tol: float = 1e-6, max_iter: int = 5000, exchange: bool = True,
                 polish: bool = True, polish_after: int = 1000, max_rounds: int = 20,
                 rng=None):
    """Optimal design for the classical or variant log-det objective.

    Returns ``(DesignMeasure, SolveReport)``.  Multiplicative updates run on
    the grid (at most ``polish_after`` of them when ``polish`` is on); with
    ``polish`` the grid solution is pruned to few atoms and refined
    continuously until the equivalence gap is below ``tol`` relative to the
    trace ``sum_g s_{n-d_g}``.
    """
    t0 = time.monotonic()
    kind = normalize_objective(objective)
    if n < 0:
        raise ValueError("n must be nonnegative")
    family = objective_family(S, n, kind)
    if grid is None:
        grid = default_grid(S, rng=rng)
    elif not isinstance(grid, CandidateGrid):
        grid = CandidateGrid(grid)
    grid.validate(S)
    s_n = dim_poly(S.dim, n)
    if len(grid) < s_n:
        raise ValueError(f"grid has {len(grid)} points, fewer than s_n = {s_n}")
    notes = []
    restarts = 0
    blocks = _Blocks(S, family, n, grid.points)
    w = np.full(len(grid), 1.0 / len(grid))
    if blocks.evaluate(w, need_d=False)[0] == NEG_INF:
        # uniform design singular: retry once on a strictly larger grid
        bigger = np.vstack([grid.points, default_grid(S, density=2.0, rng=rng).points])
        grid = CandidateGrid(np.unique(bigger, axis=0), "refined")
        blocks.set_points(grid.points)
        w = np.full(len(grid), 1.0 / len(grid))
        restarts = 1
        if blocks.evaluate(w, need_d=False)[0] == NEG_INF:
            raise SingularMomentMatrixError(
                "uniform design on the candidate grid has a singular moment block; "
                "the grid does not span the required polynomials")
    c = blocks.trace
    grid_iters = min(max_iter, polish_after) if polish else max_iter
    w, f, D, stats = _multiplicative(blocks, w, tol, grid_iters, exchange)
    grid_gap = (D.max() - c) / c
    grid_local = (grid.points - blocks.center) / blocks.scale
    design = DesignMeasure(grid.points, w)
    rounds = 0
    if S.dim == 1 and kind == "variant":
        nodes, gw = gauss_rule(grid.points[:, 0], w, n + 1)
        nodes = np.clip(nodes, grid.points.min(), grid.points.max())
        model = _LocalModel(blocks)
        Y = ((nodes - blocks.center[0]) / blocks.scale[0]).reshape(-1, 1)
        gw = _reweight(model, Y, gw, 2000)
        if polish:
            # move the n + 1 nodes only; adding atoms would give up the minimal support
            Y, gw = _joint_polish(model, Y, gw)
            rounds = 1
        candidate = _design_from_local(blocks, Y, gw)
        if S.contains(candidate.atoms).all():
            design = _better(S, n, kind, design.pruned(), candidate, rng, notes)
            if design is candidate:
                notes.append("support extracted as the Gauss rule of the grid design")
    elif polish and not (grid_gap <= tol and stats["iterations"] == 0):
        Y, pw = _prune_for_polish(grid_local, w, 2 * n)
        Y, pw, rounds = _polish(blocks, Y, pw, tol, max_rounds, grid_local, notes)
        candidate = _design_from_local(blocks, Y, pw).pruned()
        design = _better(S, n, kind, design.pruned(), candidate, rng, notes)
    design = design.pruned()
    gap = equivalence_gap(S, design, n, kind, rng=rng)
    fval = objective_value(S, design, n, kind)
    report = SolveReport(
        objective=fval, gap=gap.gap, support_residual=gap.support_residual,
        iterations=stats["iterations"], grid_size=len(grid),
        block_dims=[dim_poly(S.dim, n - dg) for _, dg in family],
        converged=bool(gap.gap <= tol * c), objective_kind=kind, trace=c,
        halvings=stats["halvings"], nonmonotone_steps=stats["nonmonotone"],
        restarts=restarts, polish_rounds=rounds, seconds=time.monotonic() - t0, notes=notes)
    if stats["stalled"]:
        report.notes.append("halving safeguard exhausted during the grid phase")
    return design, report


@dataclass
class GapReport:
    """Equivalence-theorem certificate: ``gap = max_x D(x) - c`` over an audit set."""

    gap: float
    support_residual: float
    trace: int
    argmax: np.ndarray
    audit_size: int

    def __float__(self):
        return float(self.gap)

    @property
    def relative(self) -> float:
        return self.gap / self.trace

    def to_json(self) -> dict:
        return {"gap": self.gap, "relative_gap": self.relative,
                "support_residual": self.support_residual, "trace": self.trace,
                "argmax": np.asarray(self.argmax).tolist(), "audit_size": self.audit_size}


def _variance_of(S, design_or_moments, n, kind):
    family = objective_family(S, n, kind)
    if isinstance(design_or_moments, MomentVector):
        return VarianceFunction(design_or_moments, n, family, frame=set_frame(S)), None
    design = design_or_moments
    blocks = _Blocks(S, family, n, design.atoms)
    if blocks.evaluate(design.weights, need_d=False)[0] == NEG_INF:
        raise SingularMomentMatrixError("a moment block of the design is singular")
    return blocks.variance(design.weights), design


def equivalence_gap(S: SemiAlgebraicSet, design, n: int, objective: str = "classical",
                    audit=None, ascent: bool = True, rng=None) -> GapReport:
    """``max_x D(x) - c`` over an audit grid denser than the solve grid, refined by
    local ascent; ``support_residual`` is ``max |c - D(atom)|`` over the atoms."""
    kind = normalize_objective(objective)
    D, des = _variance_of(S, design, n, kind)
    c = D.trace
    pts = default_grid(S, density=2.0, rng=rng).points if audit is None else \
        np.asarray(getattr(audit, "points", audit), dtype=float).reshape(-1, S.dim)
    vals = D(pts)
    best = int(np.argmax(vals))
    top_val, top_x = vals[best], pts[best]
    if ascent:
        starts = pts[np.argsort(-vals)[:10]]
        if des is not None:
            starts = np.vstack([des.atoms, starts])
        Ym, vm = _maximize_original(S, D, starts)
        if vm.size and vm.max() > top_val:
            top_val, top_x = vm.max(), Ym[int(np.argmax(vm))]
    support = 0.0
    if des is not None:
        support = float(np.max(np.abs(c - D(des.atoms))))
    return GapReport(float(max(top_val - c, 0.0) if top_val - c > -1e-9 else top_val - c),
                     support, c, np.asarray(top_x), int(pts.shape[0]))


def _maximize_original(S, D, starts, max_starts=40):
    gens = list(S.generators)
    dgens = [[g.derivative(i) for i in range(S.dim)] for g in gens]

    def cons_val(Y):
        return np.column_stack([_poly_values(g, Y) for g in gens])

    def cons_grad(Y):
        out = np.zeros((Y.shape[0], len(gens), S.dim))
        for j, dg in enumerate(dgens):
            for i in range(S.dim):
                out[:, j, i] = _poly_values(dg[i], Y)
        return out

    return _maximize(D.value_and_grad, cons_val if gens else None, cons_grad,
                     list(S.bbox), starts, max_starts)


def refine_grid(S: SemiAlgebraicSet, design: DesignMeasure, n: int, objective: str = "classical",
                grid=None, top: int = 10) -> CandidateGrid:
    """Grid augmented with local maximizers of D started from its ``top`` best points."""
    kind = normalize_objective(objective)
    grid = default_grid(S) if grid is None else grid
    if not isinstance(grid, CandidateGrid):
        grid = CandidateGrid(grid)
    D, _ = _variance_of(S, design, n, kind)
    vals = D(grid.points)
    if vals.max() - vals.min() <= 1e-9 * D.trace:
        return grid
    Ym, _ = _maximize_original(S, D, grid.points[np.argsort(-vals)[:top]], top)
    if Ym.shape[0] == 0:
        return grid
    Ym = Ym[S.contains(Ym, 1e-9)]
    return CandidateGrid(np.vstack([grid.points, Ym]), "refined")
