"""Sampled numerical checks of the optimality theory.

Each check returns a small report object with the measured residuals, the
tolerance it was judged against and a ``passed`` flag; ``to_json`` gives
the form written by the command line.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np

from .basis import Polynomial, dim_poly, monomial_basis, vandermonde
from .christoffel import VarianceFunction, equilibrium_variance, set_frame
from .cubature import cubature_for_equilibrium
from .equilibrium import (CubatureRule, SemiAlgebraicSet, _exact_moments_cached, description_family,
                          family_trace, variant_family)
from .errors import SingularMomentMatrixError, UnsupportedKindError
from .moments import MomentVector

NEG_INF = float("-inf")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


@dataclass
class CheckReport:
    name: str
    passed: bool
    residual: float
    tolerance: float
    details: dict = field(default_factory=dict)

    def __float__(self):
        return float(self.residual)

    def to_json(self) -> dict:
        return _jsonable(asdict(self))


def _require_builtin(S):
    if not S.builtin:
        raise UnsupportedKindError(f"this check needs a built-in set, got {S.kind!r}")


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def _cube(S, grow=0.0):
    lo = np.array([b[0] for b in S.bbox])
    hi = np.array([b[1] for b in S.bbox])
    pad = grow * (hi - lo) / 2
    return lo - pad, hi + pad


def sample_cube(S: SemiAlgebraicSet, count: int, rng=None, grow: float = 0.25) -> np.ndarray:
    """Half the points in the bounding box, half in a box enlarged by ``grow``.

    The enlarged part guarantees exterior points even when the set fills
    its bounding box.
    """
    rng = _rng(rng)
    half = count // 2
    lo, hi = _cube(S)
    inner = rng.uniform(lo, hi, size=(count - half, S.dim))
    lo, hi = _cube(S, grow)
    outer = rng.uniform(lo, hi, size=(half, S.dim))
    return np.vstack([inner, outer])


def sample_inside(S: SemiAlgebraicSet, count: int, rng=None) -> np.ndarray:
    rng = _rng(rng)
    if S.geometry == "simplex":
        return rng.dirichlet(np.ones(S.dim + 1), size=count)[:, :S.dim]
    if S.geometry == "ball":
        u = rng.standard_normal((count, S.dim))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        return u * rng.uniform(0, 1, size=(count, 1)) ** (1.0 / S.dim)
    lo, hi = _cube(S)
    pts = rng.uniform(lo, hi, size=(4 * count, S.dim))
    return pts[S.contains(pts, 0.0)][:count]


# Pell identity

def check_pell(S: SemiAlgebraicSet, n: int, samples: int = 1000, rng=None,
               rtol: float = 1e-6) -> CheckReport:
    """``max |sum_g g K^{g phi*}_{n-d_g}(x, x) - sum_g s_{n-d_g}|`` over sampled x,
    inside and outside ``S``."""
    _require_builtin(S)
    if n < 1:
        raise ValueError("the identity is checked for n >= 1")
    D = equilibrium_variance(S, n)
    pts = sample_cube(S, samples, rng)
    dev = np.abs(D(pts) - D.trace)
    k = int(np.argmax(dev))
    return CheckReport("pell", bool(dev[k] <= rtol * D.trace), float(dev[k]), rtol * D.trace,
                       {"set": S.kind, "dim": S.dim, "n": n, "constant": D.trace,
                        "samples": int(pts.shape[0]), "worst_point": pts[k],
                        "family_size": len(D.family)})


# boundary maxima of the plain kernel

def _box_boundary(d, count, rng, exclusion=1e-3):
    pts = rng.uniform(-1, 1, size=(count, d))
    face = rng.integers(0, d, size=count)
    pts[np.arange(count), face] = rng.choice([-1.0, 1.0], size=count)
    if d > 1:
        # stay away from vertices so equality there is not mistaken for the face value
        free = np.ones_like(pts, dtype=bool)
        free[np.arange(count), face] = False
        near = np.all(~free | (1 - np.abs(pts) < exclusion), axis=1)
        pts = pts[~near]
    return pts


def _simplex_boundary(d, m):
    # barycentric lattice on every facet, vertices removed
    from .solver import _simplex_lattice

    lat = _simplex_lattice(d, m)
    bary = np.column_stack([lat, 1 - lat.sum(axis=1)])
    on_face = np.isclose(bary, 0.0).any(axis=1)
    vertex = np.isclose(bary, 1.0).any(axis=1)
    return lat[on_face & ~vertex]


def boundary_samples(S: SemiAlgebraicSet, count: int = 256, rng=None):
    """``(vertices, non-vertex boundary points)`` used by :func:`check_boundary_maxima`."""
    rng = _rng(rng)
    d = S.dim
    if S.geometry == "ball":
        if d == 1:
            return np.array([[-1.0], [1.0]]), np.zeros((0, 1))
        u = rng.standard_normal((count, d))
        if d == 2:
            t = 2 * np.pi * np.arange(count) / count
            u = np.column_stack([np.cos(t), np.sin(t)])
        return np.zeros((0, d)), u / np.linalg.norm(u, axis=1, keepdims=True)
    if S.geometry == "box":
        vertices = np.array(np.meshgrid(*([[-1.0, 1.0]] * d), indexing="ij")).reshape(d, -1).T
        return vertices, (_box_boundary(d, count, rng) if d > 1 else np.zeros((0, 1)))
    vertices = np.vstack([np.zeros(d), np.eye(d)])
    m = 32 if d <= 2 else 12
    return vertices, _simplex_boundary(d, m)


def check_boundary_maxima(S: SemiAlgebraicSet, n: int, samples: int = 256, rng=None,
                          atol: float = 1e-8, margin: float = 1e-6) -> CheckReport:
    """Where ``K^{phi*}_n(x, x)`` reaches ``sum_g s_{n-d_g}`` on ``S``.

    Ball: on every boundary sample.  Box and simplex: at the vertices, with
    the value below the constant by more than ``margin`` on the rest of the
    sampled boundary.
    """
    _require_builtin(S)
    rng = _rng(rng)
    D = equilibrium_variance(S, n)
    K = D.blocks[0][1]
    c = D.trace
    vertices, rim = boundary_samples(S, samples, rng)
    interior = sample_inside(S, 4 * samples, rng)
    every = np.vstack([vertices, rim, interior])
    kv = K.kernel(every)
    top = int(np.argmax(kv))
    details = {"set": S.kind, "dim": S.dim, "n": n, "constant": c,
               "max_over_samples": float(kv[top]), "argmax": every[top]}
    residual = 0.0
    passed = bool(kv.max() <= c + atol * c)
    if vertices.shape[0]:
        kvert = K.kernel(vertices)
        dev = np.abs(kvert - c)
        residual = max(residual, float(dev.max()))
        passed &= bool(dev.max() <= atol * c)
        details["vertex_values"] = kvert
    if rim.shape[0]:
        krim = K.kernel(rim)
        if S.geometry == "ball":
            dev = np.abs(krim - c)
            residual = max(residual, float(dev.max()))
            passed &= bool(dev.max() <= atol * c)
            details["boundary_max_deviation"] = float(dev.max())
        else:
            gap = float(np.min(c - krim))
            details["boundary_margin"] = gap
            passed &= gap > margin
    locations = every[np.abs(kv - c) <= atol * c]
    details["locations"] = locations
    details["boundary_samples"] = int(rim.shape[0])
    return CheckReport("boundary", bool(passed), residual, atol * c, details)


# general-set optimality conditions

def _design_parts(design):
    if isinstance(design, MomentVector):
        return None, None, design
    atoms = np.asarray(design.atoms, dtype=float)
    weights = np.asarray(design.weights, dtype=float)
    return atoms, weights, None


def description_variance(S: SemiAlgebraicSet, design, n: int) -> VarianceFunction:
    """``sum_j g_j K^{g_j mu}_{n-r_j}`` for the set's own generators ``{1, g_1..g_m}``."""
    from .solver import _Blocks

    family = description_family(S, n)
    atoms, weights, phi = _design_parts(design)
    if phi is not None:
        return VarianceFunction(phi, n, family, frame=set_frame(S))
    blocks = _Blocks(S, family, n, atoms)
    if blocks.evaluate(weights / weights.sum(), need_d=False)[0] == NEG_INF:
        raise SingularMomentMatrixError(
            "a localizing block of the design is singular for the set's generators")
    return blocks.variance(weights / weights.sum())


def check_kkt_general(S: SemiAlgebraicSet, design, n: int, samples: int = 2000, rng=None,
                      tol: float = 1e-6) -> CheckReport:
    """Inequality, support and identity residuals of the optimality conditions."""
    rng = _rng(rng)
    D = description_variance(S, design, n)
    c = D.trace
    inside = _inside_samples(S, samples, rng)
    ineq = float(np.max(D(inside)) - c)
    atoms, _, _ = _design_parts(design)
    support = float(np.max(np.abs(D(atoms) - c))) if atoms is not None else 0.0
    anywhere = sample_cube(S, samples, rng)
    identity = float(np.max(np.abs(D(anywhere) - c)))
    details = {"trace": c, "inequality_residual": ineq, "support_residual": support,
               "identity_residual": identity, "family": [repr(g) for g, _ in D.family]}
    passed = ineq <= tol * c and support <= tol * c
    return CheckReport("kkt", bool(passed), max(ineq, support), tol * c, details)


def _inside_samples(S, count, rng):
    if S.builtin:
        return sample_inside(S, count, rng)
    from .solver import custom_grid

    return custom_grid(S, size=count, rng=rng).points


def pstar_value(S: SemiAlgebraicSet, n: int, x) -> float | np.ndarray:
    """``p*_n(x) = sum_j g_j K^{g_j phi*}_{n-r_j}(x, x) / sum_j s_{n-r_j}`` with the set's own
    description ``{1, g_1..g_m}``."""
    _require_builtin(S)
    D = equilibrium_variance(S, n, description_family(S, n))
    arr = np.asarray(x, dtype=float)
    vals = D(arr.reshape(-1, S.dim)) / D.trace
    if arr.ndim == 0 or (arr.ndim == 1 and arr.size == S.dim):
        return float(vals[0])
    return vals


def check_pstar(S: SemiAlgebraicSet, n: int, samples: int = 200, rng=None,
                atol: float = 1e-9) -> CheckReport:
    """``max |p*_n - 1|`` over samples in ``S`` (an identity for the ball)."""
    pts = sample_inside(S, samples, _rng(rng))
    vals = pstar_value(S, n, pts)
    dev = np.abs(vals - 1.0)
    at0 = pstar_value(S, n, np.zeros(S.dim)) if S.geometry != "simplex" else None
    details = {"set": S.kind, "dim": S.dim, "n": n, "max_deviation": float(dev.max()),
               "p_at_center": at0}
    return CheckReport("pstar", bool(dev.max() <= atol), float(dev.max()), atol, details)


# weak-star convergence of the optimal rules

def exact_integral(S: SemiAlgebraicSet, f: Polynomial) -> Fraction:
    """``int f d phi*`` in exact rational arithmetic (coefficients as given)."""
    _require_builtin(S)
    deg = f.degree
    mom = _exact_moments_cached(S.geometry, S.dim, deg)
    pos = monomial_basis(S.dim, deg).position
    return sum((Fraction(c) * mom[pos[e]] for e, c in f.terms.items()), Fraction(0))


def weak_star_gap(S: SemiAlgebraicSet, n: int, f: Polynomial, rule: CubatureRule | None = None
                  ) -> float:
    """``|sum_i w_i f(x_i) - int f d phi*|`` for the degree-n optimal rule."""
    rule = cubature_for_equilibrium(S, n) if rule is None else rule
    return abs(rule.integrate(f) - float(exact_integral(S, f)))


def check_weakstar(S: SemiAlgebraicSet, n_values, f: Polynomial) -> CheckReport:
    gaps = [weak_star_gap(S, n, f) for n in n_values]
    decreasing = all(b < a for a, b in zip(gaps, gaps[1:]))
    exact = [g for n, g in zip(n_values, gaps) if f.degree <= 2 * n]
    passed = decreasing or all(g <= 1e-9 for g in gaps[1:])
    passed = passed and all(g <= 1e-9 for g in exact)
    return CheckReport("weakstar", bool(passed), float(gaps[-1]), 1e-9,
                       {"n": list(n_values), "gaps": gaps, "strictly_decreasing": decreasing,
                        "f": repr(f)})


# Fekete / Vandermonde diagnostics

def vdm_logdet(points, n: int) -> float:
    """``log |det VDM|`` for exactly ``s_n`` points; ``-inf`` when singular."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    s = dim_poly(pts.shape[1], n)
    if pts.shape[0] != s:
        raise ValueError(f"a degree-{n} Vandermonde determinant needs exactly {s} points, "
                         f"got {pts.shape[0]}")
    V = vandermonde(pts, n)
    sv = np.linalg.svd(V, compute_uv=False)
    if sv[-1] <= 1e-14 * sv[0]:
        return NEG_INF
    return float(np.sum(np.log(sv)))


def fekete_identity_residual(points, n: int) -> float:
    """``|log det M_n(uniform) - (2 log|det VDM| - s_n log s_n)|``."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    s = pts.shape[0]
    V = vandermonde(pts, n)
    sign, ld = np.linalg.slogdet(V.T @ V / s)
    lv = vdm_logdet(pts, n)
    if sign <= 0 or lv == NEG_INF:
        return 0.0 if lv == NEG_INF else float("inf")
    return abs(ld - (2 * lv - s * np.log(s)))
