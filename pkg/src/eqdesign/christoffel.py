"""Christoffel-Darboux kernel diagonal and Christoffel function from moments."""

from __future__ import annotations

import logging
import warnings

import numpy as np
from scipy.linalg import solve_triangular

from .basis import Polynomial, dim_poly, monomial_basis, poly_eval, vandermonde, vandermonde_grad
from .errors import SingularMomentMatrixError
from .moments import MomentVector, affine_moments, moment_matrix, shifted_moments

log = logging.getLogger(__name__)

PIVOT_RTOL = 1e-12
CONDITION_WARN = 1e12


class ConditioningWarning(RuntimeWarning):
    pass


def cholesky(M: np.ndarray, rtol: float = PIVOT_RTOL) -> np.ndarray:
    """Lower Cholesky factor of a symmetric matrix.

    Raises :class:`SingularMomentMatrixError` carrying the index of the
    first pivot below ``rtol * trace``; no jitter is ever added.
    """
    M = np.array(M, dtype=float)
    m = M.shape[0]
    scale = rtol * max(np.trace(M), np.finfo(float).tiny)
    try:
        L = np.linalg.cholesky(M)
        piv = np.diag(L) ** 2
        if m == 0 or piv.min() > scale:
            return L
    except np.linalg.LinAlgError:
        pass
    # slow path: locate the failing pivot
    L = np.zeros_like(M)
    for j in range(m):
        piv = M[j, j] - L[j, :j] @ L[j, :j]
        if not piv > scale:
            raise SingularMomentMatrixError(
                f"moment matrix is not positive definite: pivot {j} = {piv:.3e} "
                f"(threshold {scale:.3e})", pivot=j)
        L[j, j] = np.sqrt(piv)
        L[j + 1:, j] = (M[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    return L


class KernelEvaluator:
    """Evaluates ``K_k(x, x) = v_k(x)^T M_k^{-1} v_k(x)`` through a Cholesky factor.

    ``M`` may be expressed in shifted coordinates ``y = (x - center) / scale``
    (``frame``); the kernel diagonal is invariant under such a change, so
    callers always pass points in the original coordinates.
    """

    def __init__(self, M: np.ndarray, k: int, dim: int, source: MomentVector | None = None,
                 frame=None, chol=None):
        self.order = int(k)
        self.dim = int(dim)
        self.matrix = np.asarray(M, dtype=float)
        self.source = source
        center, scale = frame if frame is not None else (0.0, 1.0)
        self.center = np.broadcast_to(np.asarray(center, dtype=float), (self.dim,))
        self.scale = np.broadcast_to(np.asarray(scale, dtype=float), (self.dim,))
        self.chol = cholesky(self.matrix) if chol is None else np.asarray(chol, dtype=float)
        self.condition = _condition_estimate(self.chol)
        if self.condition > CONDITION_WARN:
            warnings.warn(f"moment matrix of order {k} is ill-conditioned "
                          f"(kappa ~ {self.condition:.2e})", ConditioningWarning, stacklevel=3)

    @property
    def size(self):
        return self.matrix.shape[0]

    def logdet(self) -> float:
        """log det of ``M`` in original coordinates."""
        ld = float(2.0 * np.sum(np.log(np.diag(self.chol))))
        return ld + _frame_logdet_shift(self.dim, self.order, self.scale)

    def _local(self, points):
        pts = np.asarray(points, dtype=float).reshape(-1, self.dim)
        return (pts - self.center) / self.scale

    def _whiten(self, V):
        return solve_triangular(self.chol, V.T, lower=True, check_finite=False)

    def kernel(self, points) -> np.ndarray:
        """``K(x, x)`` at each row of ``points``."""
        V = vandermonde(self._local(points), self.order)
        Y = self._whiten(V)
        return np.einsum("ij,ij->j", Y, Y)

    def kernel_and_grad(self, points):
        pts = self._local(points)
        V = vandermonde(pts, self.order)
        Minv_v = solve_triangular(self.chol.T, self._whiten(V), lower=False, check_finite=False)
        K = np.einsum("ij,ji->i", V, Minv_v)
        J = vandermonde_grad(pts, self.order)
        grad = 2.0 * np.einsum("mds,sm->md", J, Minv_v) / self.scale
        return K, grad

    def __call__(self, x) -> float:
        return float(self.kernel(x)[0])


def _condition_estimate(L):
    d = np.diag(L)
    if d.size == 0:
        return 1.0
    return float((d.max() / d.min()) ** 2)


def _frame_logdet_shift(d, k, scale):
    # v(x) = T v(y) with T triangular, diag(T) = prod_i scale_i^alpha_i
    if np.all(scale == 1.0):
        return 0.0
    E = monomial_basis(d, k).exponents
    return float(2.0 * np.sum(E @ np.log(scale)))


def build_kernel(phi: MomentVector, k: int, frame=None) -> KernelEvaluator:
    """Kernel evaluator for ``M_k(phi)``; requires ``2k <= degree(phi)``."""
    if frame is not None:
        return KernelEvaluator(moment_matrix(affine_moments(phi, *frame), k), k, phi.dim,
                               source=phi, frame=frame)
    return KernelEvaluator(moment_matrix(phi, k), k, phi.dim, source=phi)


def christoffel_value(ev: KernelEvaluator, x) -> float:
    """``Lambda(x) = 1 / K(x, x)``."""
    return 1.0 / ev(x)


def christoffel_values(ev: KernelEvaluator, points) -> np.ndarray:
    return 1.0 / ev.kernel(points)


class VarianceFunction:
    """``D(x) = sum_g g(x) K^{g phi}_{n - d_g}(x, x)`` over a generator family.

    ``family`` is a list of ``(g, d_g)`` pairs.  With the family ``[(1, 0)]``
    this is the classical variance function ``K^phi_n(x, x)``.
    """

    def __init__(self, phi: MomentVector, n: int, family, frame=None, local=False):
        """``phi`` holds moments in original coordinates, or in the frame's
        shifted coordinates when ``local`` is true."""
        self.n = int(n)
        self.dim = phi.dim
        self.family = list(family)
        self.blocks = []
        if frame is not None and not local:
            phi = affine_moments(phi, *frame)
        center, scale = frame if frame is not None else (0.0, 1.0)
        for g, dg in self.family:
            k = self.n - dg
            g_local = g.affine(center, scale) if frame is not None else g
            gphi = shifted_moments(phi.truncate(2 * k + g.degree), g_local)
            try:
                ev = KernelEvaluator(moment_matrix(gphi, k), k, phi.dim, source=phi, frame=frame)
            except SingularMomentMatrixError as exc:
                raise SingularMomentMatrixError(
                    f"localizing block for generator {g!r} (order {k}) is singular: {exc}",
                    pivot=exc.pivot, generator=g) from exc
            self.blocks.append((g, ev))
        self.trace = sum(dim_poly(self.dim, self.n - dg) for _, dg in self.family)

    @classmethod
    def from_matrices(cls, family, matrices, n, dim, frame=None, chols=None):
        """Build from precomputed block matrices (and optionally their factors)."""
        self = cls.__new__(cls)
        self.n, self.dim, self.family = int(n), int(dim), list(family)
        self.blocks = []
        chols = [None] * len(self.family) if chols is None else chols
        for (g, dg), M, L in zip(self.family, matrices, chols):
            try:
                self.blocks.append((g, KernelEvaluator(M, n - dg, dim, frame=frame, chol=L)))
            except SingularMomentMatrixError as exc:
                raise SingularMomentMatrixError(
                    f"localizing block for generator {g!r} (order {n - dg}) is singular: {exc}",
                    pivot=exc.pivot, generator=g) from exc
        self.trace = sum(dim_poly(dim, n - dg) for _, dg in family)
        return self

    def logdet(self) -> float:
        return sum(ev.logdet() for _, ev in self.blocks)

    def __call__(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, self.dim)
        out = np.zeros(pts.shape[0])
        for g, ev in self.blocks:
            out += _gvals(g, pts) * ev.kernel(pts)
        return out

    def value_and_grad(self, points):
        pts = np.asarray(points, dtype=float).reshape(-1, self.dim)
        val = np.zeros(pts.shape[0])
        grad = np.zeros_like(pts)
        for g, ev in self.blocks:
            K, dK = ev.kernel_and_grad(pts)
            gv = _gvals(g, pts)
            val += gv * K
            grad += gv[:, None] * dK
            for i in range(self.dim):
                grad[:, i] += _gvals(g.derivative(i), pts) * K
        return val, grad


def _gvals(g: Polynomial, pts):
    if g.degree == 0:
        return np.full(pts.shape[0], g.terms.get((0,) * g.dim, 0.0))
    if pts.shape[0] == 1:
        return np.atleast_1d(poly_eval(g, pts[0]))
    return poly_eval(g, pts)


def set_frame(S):
    """Coordinate frame mapping the bounding box of ``S`` onto [-1, 1]^d."""
    lo = np.array([b[0] for b in S.bbox])
    hi = np.array([b[1] for b in S.bbox])
    return tuple((lo + hi) / 2), tuple((hi - lo) / 2)


def equilibrium_variance(S, n: int, family=None) -> VarianceFunction:
    """Variance function of the equilibrium measure of a built-in set.

    Blocks are assembled from exact rational moments and factored in
    extended precision; outside ``S`` the terms ``g K`` grow large and
    cancel, so double-precision factors are not accurate enough there.
    """
    from .equilibrium import exact_localizing_blocks, variant_family

    family = variant_family(S, n) if family is None else list(family)
    mats, chols = exact_localizing_blocks(S, n, family)
    return VarianceFunction.from_matrices(family, mats, n, S.dim, chols=chols)


def variance_function(S, phi: MomentVector, n: int, x, generators=None) -> float | np.ndarray:
    """``sum_g g(x) K^{g phi}_{n-d_g}(x, x)``.

    ``generators`` is a list of ``(g, d_g)`` pairs or bare polynomials; by
    default the variant family of ``S`` is used.
    """
    from .equilibrium import variant_family

    if generators is None:
        family = variant_family(S, n)
    else:
        family = [item if isinstance(item, tuple) else (item, item.half_degree)
                  for item in generators]
    D = VarianceFunction(phi, n, family, frame=set_frame(S))
    arr = np.asarray(x, dtype=float)
    vals = D(arr)
    if arr.ndim == 0 or (arr.ndim == 1 and arr.size == phi.dim):
        return float(vals[0])
    return vals
