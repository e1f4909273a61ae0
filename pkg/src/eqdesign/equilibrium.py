"""Equilibrium measures of the ball, box and simplex.

Closed-form moments of the probability-normalized equilibrium measures,
the enlarged generator families used by the variant log-det objective,
and Gauss-Chebyshev rules (with their tensor products on the box).
"""

from __future__ import annotations

import functools
import itertools
import math
from fractions import Fraction
from dataclasses import dataclass, field

import mpmath
import numpy as np

from .basis import Polynomial, dim_poly, monomial_basis, poly_eval, vandermonde
from .errors import InvalidDimensionError, SingularMomentMatrixError, UnsupportedKindError
from .moments import MomentVector

BUILTIN_KINDS = ("interval", "ball", "box", "simplex")
KINDS = BUILTIN_KINDS + ("custom",)
MAX_TENSOR_ATOMS = 10**7


@dataclass(frozen=True)
class SemiAlgebraicSet:
    """``S = {x : g_j(x) >= 0, j = 1..m}``.

    ``generators`` is the set's own description (without ``g_0 = 1``);
    ``bbox`` is a bounding box used for sampling.
    """

    dim: int
    kind: str
    generators: tuple = ()
    name: str = ""
    bbox: tuple = field(default=None)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise UnsupportedKindError(f"unknown set kind {self.kind!r}")
        if self.dim < 1:
            raise InvalidDimensionError("set dimension must be positive")
        if self.kind == "interval" and self.dim != 1:
            raise InvalidDimensionError("an interval has dimension 1")
        object.__setattr__(self, "generators", tuple(self.generators))
        for g in self.generators:
            if g.dim != self.dim:
                raise InvalidDimensionError("generator dimension differs from set dimension")
        if not self.name:
            object.__setattr__(self, "name", self.kind)
        if self.bbox is None:
            lo = 0.0 if self.kind == "simplex" else -1.0
            object.__setattr__(self, "bbox", tuple((lo, 1.0) for _ in range(self.dim)))
        else:
            object.__setattr__(self, "bbox", tuple((float(a), float(b)) for a, b in self.bbox))

    @property
    def builtin(self) -> bool:
        return self.kind in BUILTIN_KINDS

    @property
    def geometry(self) -> str:
        """Built-in kind with ``interval`` folded into ``box``."""
        return "box" if self.kind == "interval" else self.kind

    def generator_values(self, points) -> np.ndarray:
        """Array ``(m_points, m_generators)`` of ``g_j(x)``."""
        pts = np.asarray(points, dtype=float).reshape(-1, self.dim)
        if not self.generators:
            return np.zeros((pts.shape[0], 0))
        return np.column_stack([poly_eval(g, pts) if pts.shape[0] > 1 else
                                np.atleast_1d(poly_eval(g, pts[0])) for g in self.generators])

    def contains(self, points, tol: float = 1e-9) -> np.ndarray:
        vals = self.generator_values(points)
        return np.all(vals >= -tol, axis=1)


def ball(d: int) -> SemiAlgebraicSet:
    g = Polynomial.constant(d)
    for i in range(d):
        g = g - Polynomial.variable(d, i) ** 2
    return SemiAlgebraicSet(d, "ball", (g,))


def box(d: int) -> SemiAlgebraicSet:
    gens = tuple(1 - Polynomial.variable(d, i) ** 2 for i in range(d))
    return SemiAlgebraicSet(d, "box", gens)


def interval() -> SemiAlgebraicSet:
    return SemiAlgebraicSet(1, "interval", (1 - Polynomial.variable(1, 0) ** 2,))


def simplex(d: int) -> SemiAlgebraicSet:
    xs = [Polynomial.variable(d, i) for i in range(d)]
    last = Polynomial.constant(d)
    for x in xs:
        last = last - x
    return SemiAlgebraicSet(d, "simplex", tuple(xs) + (last,))


def make_set(kind: str, d: int = 1) -> SemiAlgebraicSet:
    if kind == "interval":
        if d != 1:
            raise InvalidDimensionError("an interval has dimension 1")
        return interval()
    if kind == "ball":
        return ball(d)
    if kind == "box":
        return box(d)
    if kind == "simplex":
        return simplex(d)
    raise UnsupportedKindError(f"no built-in set of kind {kind!r}")


# closed-form moments (all rational, computed exactly)

def _half_rising(a: int) -> Fraction:
    """``(1/2)_a = Gamma(a + 1/2) / Gamma(1/2)``."""
    out = Fraction(1)
    for j in range(a):
        out *= Fraction(2 * j + 1, 2)
    return out


def _rising(x: Fraction, a: int) -> Fraction:
    out = Fraction(1)
    for j in range(a):
        out *= x + j
    return out


def arcsine_moment_exact(k: int) -> Fraction:
    if k % 2:
        return Fraction(0)
    return Fraction(math.comb(k, k // 2), 4 ** (k // 2))


def arcsine_moment(k: int) -> float:
    """``int x^k dx / (pi sqrt(1-x^2))`` on [-1, 1], i.e. ``C(k, k/2) / 2^k`` for even k."""
    return float(arcsine_moment_exact(k))


def _box_moment(alpha) -> Fraction:
    out = Fraction(1)
    for a in alpha:
        out *= arcsine_moment_exact(a)
    return out


def _ball_moment(alpha) -> Fraction:
    # density proportional to (1 - |x|^2)^(-1/2) on the unit ball
    if any(a % 2 for a in alpha):
        return Fraction(0)
    d = len(alpha)
    beta = [a // 2 for a in alpha]
    num = Fraction(1)
    for b in beta:
        num *= _half_rising(b)
    return num / _rising(Fraction(d + 1, 2), sum(beta))


def _simplex_moment(alpha) -> Fraction:
    # Dirichlet(1/2, ..., 1/2) with d + 1 parameters
    num = Fraction(1)
    for a in alpha:
        num *= _half_rising(a)
    return num / _rising(Fraction(len(alpha) + 1, 2), sum(alpha))


_MOMENT_FORMULAS = {"box": _box_moment, "ball": _ball_moment, "simplex": _simplex_moment}


def _exact_moments(S, degree):
    if not S.builtin:
        raise UnsupportedKindError(
            "closed-form equilibrium moments exist only for interval/ball/box/simplex; "
            "use the design solver for custom sets")
    if degree < 0:
        raise ValueError("degree must be nonnegative")
    f = _MOMENT_FORMULAS[S.geometry]
    return [f(alpha) for alpha in monomial_basis(S.dim, degree).indices]


def _exact_affine(vals, d, degree, center, scale):
    basis = monomial_basis(d, degree)
    center = [Fraction(c) for c in center]
    scale = [Fraction(s) for s in scale]
    pos = basis.position
    out = []
    for alpha in basis.indices:
        # expand prod_i ((x_i - c_i) / s_i)^alpha_i
        poly = {(0,) * d: Fraction(1)}
        for i, a in enumerate(alpha):
            for _ in range(a):
                nxt = {}
                for e, c in poly.items():
                    up = e[:i] + (e[i] + 1,) + e[i + 1:]
                    nxt[up] = nxt.get(up, 0) + c / scale[i]
                    nxt[e] = nxt.get(e, 0) - c * center[i] / scale[i]
                poly = nxt
        out.append(sum(c * vals[pos[e]] for e, c in poly.items()))
    return out


def equilibrium_moments(S: SemiAlgebraicSet, degree: int, frame=None) -> MomentVector:
    """Moments up to ``degree`` of the normalized equilibrium measure of ``S``.

    With ``frame = (center, scale)`` the moments of the image measure under
    ``y = (x - center) / scale`` are returned instead; the change of
    coordinates is carried out in exact arithmetic.
    """
    vals = list(_exact_moments_cached(S.geometry, S.dim, degree)) if S.builtin else _exact_moments(S, degree)
    if frame is not None:
        center, scale = frame
        center = np.broadcast_to(center, (S.dim,))
        scale = np.broadcast_to(scale, (S.dim,))
        if np.any(center != 0) or np.any(scale != 1):
            vals = _exact_affine(vals, S.dim, degree, center, scale)
    return MomentVector(S.dim, degree, [float(v) for v in vals], probability=True)


@functools.lru_cache(maxsize=None)
def _exact_moments_cached(geometry, d, degree):
    f = _MOMENT_FORMULAS[geometry]
    return tuple(f(alpha) for alpha in monomial_basis(d, degree).indices)


def _poly_key(g):
    return (g.dim, tuple(sorted(g.terms.items())))


@functools.lru_cache(maxsize=512)
def _exact_block(geometry, d, k, gkey, dps):
    gdim, terms = gkey
    deg = max((sum(e) for e, _ in terms), default=0)
    mom = _exact_moments_cached(geometry, d, 2 * k + deg)
    pos = monomial_basis(d, 2 * k + deg).position
    basis = monomial_basis(d, k).indices
    coef = [(e, Fraction(c)) for e, c in terms]
    with mpmath.workdps(dps):
        M = mpmath.matrix(len(basis))
        for i, a in enumerate(basis):
            for j in range(i, len(basis)):
                b = basis[j]
                val = sum(c * mom[pos[tuple(x + y + z for x, y, z in zip(a, b, e))]]
                          for e, c in coef)
                M[i, j] = M[j, i] = mpmath.mpf(val.numerator) / val.denominator
        try:
            L = mpmath.cholesky(M)
        except ValueError as exc:
            raise SingularMomentMatrixError(f"equilibrium block of order {k} is singular") from exc
        Mf = np.array(M.tolist(), dtype=float)
        Lf = np.array(L.tolist(), dtype=float)
    Mf.setflags(write=False)
    Lf.setflags(write=False)
    return Mf, Lf


def exact_localizing_blocks(S: SemiAlgebraicSet, n: int, family, dps: int = 40):
    """``M_{n-d_g}(g phi*)`` and its Cholesky factor for each ``(g, d_g)``.

    Entries are exact rationals rounded once; the factorization runs in
    ``dps``-digit arithmetic.
    """
    if not S.builtin:
        raise UnsupportedKindError("exact equilibrium blocks need a built-in set")
    mats, chols = [], []
    for g, dg in family:
        M, L = _exact_block(S.geometry, S.dim, n - dg, _poly_key(g), dps)
        mats.append(M)
        chols.append(L)
    return mats, chols


# generator families

def generator_set(kind: str, d: int, n: int) -> list[tuple[Polynomial, int]]:
    """Generator family for the variant objective, paired with half-degrees.

    Returns ``(g, d_g)`` with ``d_g = ceil(deg(g)/2)``, the constant 1
    first; elements with ``n - d_g < 0`` are dropped.
    """
    if kind == "interval":
        kind, d = "box", 1
    one = Polynomial.constant(d)
    xs = [Polynomial.variable(d, i) for i in range(d)]
    if kind == "ball":
        g = one
        for x in xs:
            g = g - x * x
        family = [one, g]
    elif kind == "box":
        factors = [1 - x * x for x in xs]
        family = []
        for eps in _binary_vectors(d):
            if sum(eps) > n:
                continue
            g = one
            for e, f in zip(eps, factors):
                if e:
                    g = g * f
            family.append(g)
    elif kind == "simplex":
        last = one
        for x in xs:
            last = last - x
        factors = xs + [last]
        family = []
        for eps in _binary_vectors(d + 1):
            k = sum(eps)
            # even products of total degree k, kept while the block order n - k/2 >= 0
            if k % 2 or k > 2 * n:
                continue
            g = one
            for e, f in zip(eps, factors):
                if e:
                    g = g * f
            family.append(g)
    else:
        raise UnsupportedKindError(f"no generator family for kind {kind!r}")
    return [(g, g.half_degree) for g in family if n - g.half_degree >= 0]


def _binary_vectors(k):
    return sorted(itertools.product((0, 1), repeat=k), key=lambda e: (sum(e), tuple(-v for v in e)))


def description_family(S: SemiAlgebraicSet, n: int) -> list[tuple[Polynomial, int]]:
    """``{1, g_1, ..., g_m}`` from the set's own description, with half-degrees."""
    family = [Polynomial.constant(S.dim)] + list(S.generators)
    return [(g, g.half_degree) for g in family if n - g.half_degree >= 0]


def variant_family(S: SemiAlgebraicSet, n: int) -> list[tuple[Polynomial, int]]:
    """Enlarged family for built-in kinds, own description for custom sets."""
    if S.builtin:
        return generator_set(S.kind, S.dim, n)
    return description_family(S, n)


def family_trace(family, d: int, n: int) -> int:
    """``sum_g s_{n - d_g}``."""
    return sum(dim_poly(d, n - dg) for _, dg in family)


# cubature rules

@dataclass
class CubatureRule:
    atoms: np.ndarray
    weights: np.ndarray
    exact_degree: int
    target: MomentVector | None = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.atoms = np.asarray(self.atoms, dtype=float)
        if self.atoms.ndim == 1:
            self.atoms = self.atoms.reshape(-1, 1)
        self.weights = np.asarray(self.weights, dtype=float)

    @property
    def dim(self):
        return self.atoms.shape[1]

    def __len__(self):
        return self.weights.size

    def moments(self, degree: int) -> MomentVector:
        return MomentVector.from_atoms(self.atoms, self.weights, degree)

    def integrate(self, f: Polynomial) -> float:
        return float(np.dot(self.weights, poly_eval(f, self.atoms) if len(self) > 1
                            else np.atleast_1d(poly_eval(f, self.atoms[0]))))

    def moment_residual(self, target: MomentVector | None = None, degree: int | None = None) -> float:
        target = self.target if target is None else target
        degree = min(self.exact_degree, target.degree) if degree is None else degree
        got = vandermonde(self.atoms, degree).T @ self.weights
        return float(np.max(np.abs(got - target.values[:got.size])))

    def to_csv(self) -> str:
        header = ",".join([f"x{i + 1}" for i in range(self.dim)] + ["weight"])
        rows = [",".join(repr(float(v)) for v in list(a) + [w])
                for a, w in zip(self.atoms, self.weights)]
        return "\n".join([header] + rows) + "\n"


def chebyshev_nodes(n: int) -> np.ndarray:
    """Zeros of T_{n+1}: ``cos((2i-1) pi / (2(n+1)))``, i = 1..n+1 (descending)."""
    i = np.arange(1, n + 2)
    return np.cos((2 * i - 1) * np.pi / (2 * (n + 1)))


def gauss_chebyshev(n: int) -> CubatureRule:
    """(n+1)-point Gauss-Chebyshev rule, exact to degree 2n+1 for the arcsine law."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    x = chebyshev_nodes(n)
    x[np.abs(x) < 1e-15] = 0.0
    w = np.full(n + 1, 1.0 / (n + 1))
    return CubatureRule(x.reshape(-1, 1), w, 2 * n + 1,
                        target=equilibrium_moments(interval(), 2 * n + 1))


def tensor_chebyshev(d: int, n: int) -> CubatureRule:
    """d-fold product of :func:`gauss_chebyshev`; exact to total degree 2n on the box."""
    if d < 1:
        raise InvalidDimensionError("d must be positive")
    count = (n + 1) ** d
    if count > MAX_TENSOR_ATOMS:
        raise OverflowError(f"tensor rule would have {count} atoms (> {MAX_TENSOR_ATOMS})")
    x = gauss_chebyshev(n).atoms[:, 0]
    grids = np.meshgrid(*([x] * d), indexing="ij")
    atoms = np.column_stack([g.ravel() for g in grids])
    w = np.full(count, 1.0 / count)
    exact = 2 * n + 1 if d == 1 else 2 * n
    return CubatureRule(atoms, w, exact, target=equilibrium_moments(box(d), exact))
