"""Multi-indices, monomial bases and sparse polynomials.

Every vector or matrix indexed by monomials in this package uses the
graded-lexicographic order produced by :func:`multi_indices`: exponents
sorted by total degree, ties broken lexicographically with the first
variable carrying the largest power, e.g. ``(0,0), (1,0), (0,1), (2,0),
(1,1), (0,2)``.  The degree-``n`` list is a prefix of the degree-``n+1``
list.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .errors import InvalidDimensionError

INT64_MAX = 2**63 - 1


def _check_dim(d):
    if not isinstance(d, (int, np.integer)) or d < 1:
        raise InvalidDimensionError(f"dimension must be a positive integer, got {d!r}")


def _compositions(total, d):
    """All exponent tuples of length d summing to total, lexicographically descending."""
    if d == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, d - 1):
            yield (first,) + rest


@functools.lru_cache(maxsize=None)
def _multi_indices(d, n):
    out = []
    for total in range(n + 1):
        out.extend(_compositions(total, d))
    return tuple(out)


def multi_indices(d: int, n: int) -> list[tuple[int, ...]]:
    """All exponents ``alpha`` in N^d with ``|alpha| <= n``, graded-lex ordered."""
    _check_dim(d)
    if n < 0:
        return []
    return list(_multi_indices(int(d), int(n)))


def dim_poly(d: int, n: int) -> int:
    """Dimension ``C(n+d, d)`` of the space of polynomials of degree <= n in d variables."""
    _check_dim(d)
    if n < 0:
        return 0
    s = math.comb(n + d, d)
    if s > INT64_MAX:
        raise OverflowError(f"C({n + d}, {d}) does not fit in a 64-bit integer")
    return s


class MonomialBasis:
    """Ordered monomial basis of R[x]_n with a reverse lookup table."""

    def __init__(self, d: int, n: int):
        _check_dim(d)
        self.dim = int(d)
        self.degree = int(n)
        self.indices = _multi_indices(self.dim, self.degree)
        self.exponents = np.array(self.indices, dtype=np.int64).reshape(len(self.indices), self.dim)
        self.position = {alpha: i for i, alpha in enumerate(self.indices)}

    def __len__(self):
        return len(self.indices)

    def __repr__(self):
        return f"MonomialBasis(d={self.dim}, n={self.degree}, size={len(self)})"


@functools.lru_cache(maxsize=None)
def monomial_basis(d: int, n: int) -> MonomialBasis:
    return MonomialBasis(d, n)


def _as_points(x, d=None):
    pts = np.asarray(x, dtype=float)
    if pts.ndim == 0:
        pts = pts.reshape(1, 1)
    elif pts.ndim == 1:
        if d == 1 and pts.shape[0] != 1:
            pts = pts.reshape(-1, 1)
        else:
            pts = pts.reshape(1, -1)
    if d is not None and pts.shape[1] != d:
        raise InvalidDimensionError(f"expected points with {d} coordinates, got {pts.shape[1]}")
    return pts


def _powers(pts, n):
    # pow[k, i, e] = pts[k, i] ** e
    m, d = pts.shape
    pw = np.empty((m, d, n + 1))
    pw[:, :, 0] = 1.0
    for e in range(1, n + 1):
        pw[:, :, e] = pw[:, :, e - 1] * pts
    return pw


def vandermonde(points, n: int, d: int | None = None) -> np.ndarray:
    """Matrix with rows ``v_n(x_k)`` for each point ``x_k`` (shape ``(m, s_n)``)."""
    pts = _as_points(points, d)
    d = pts.shape[1]
    basis = monomial_basis(d, n)
    pw = _powers(pts, n)
    V = np.ones((pts.shape[0], len(basis)))
    for i in range(d):
        V *= pw[:, i, basis.exponents[:, i]]
    return V


def vandermonde_grad(points, n: int, d: int | None = None) -> np.ndarray:
    """Partial derivatives of ``v_n``: array of shape ``(m, d, s_n)``."""
    pts = _as_points(points, d)
    m, d = pts.shape
    basis = monomial_basis(d, n)
    pw = _powers(pts, n)
    E = basis.exponents
    out = np.empty((m, d, len(basis)))
    for j in range(d):
        G = np.ones((m, len(basis)))
        for i in range(d):
            if i == j:
                lowered = np.maximum(E[:, i] - 1, 0)
                G *= pw[:, i, lowered] * E[:, i]
            else:
                G *= pw[:, i, E[:, i]]
        out[:, j, :] = G
    return out


def monomial_vector(x, n: int) -> np.ndarray:
    """``v_n(x)``: all monomials of degree <= n at a single point, graded-lex."""
    pts = np.atleast_1d(np.asarray(x, dtype=float))
    if pts.ndim != 1:
        raise InvalidDimensionError("monomial_vector expects a single point")
    return vandermonde(pts.reshape(1, -1), n)[0]


@dataclass(frozen=True)
class Polynomial:
    """Sparse real polynomial ``sum_alpha c_alpha x^alpha`` in ``dim`` variables."""

    dim: int
    terms: Mapping[tuple[int, ...], float] = field(default_factory=dict)

    def __post_init__(self):
        _check_dim(self.dim)
        clean = {}
        for exp, c in dict(self.terms).items():
            exp = tuple(int(e) for e in exp)
            if len(exp) != self.dim:
                raise InvalidDimensionError(
                    f"exponent {exp} has {len(exp)} entries, polynomial has dim {self.dim}")
            if any(e < 0 for e in exp):
                raise ValueError(f"negative exponent in {exp}")
            c = float(c)
            if c != 0.0:
                clean[exp] = clean.get(exp, 0.0) + c
        object.__setattr__(self, "terms", {k: v for k, v in clean.items() if v != 0.0})

    # construction helpers

    @classmethod
    def constant(cls, dim, c=1.0):
        return cls(dim, {(0,) * dim: c})

    @classmethod
    def variable(cls, dim, i):
        exp = [0] * dim
        exp[i] = 1
        return cls(dim, {tuple(exp): 1.0})

    @property
    def degree(self) -> int:
        if not self.terms:
            return 0
        return max(sum(e) for e in self.terms)

    @property
    def half_degree(self) -> int:
        """``ceil(deg / 2)``."""
        return -(-self.degree // 2)

    def _coerce(self, other):
        if isinstance(other, Polynomial):
            if other.dim != self.dim:
                raise InvalidDimensionError("polynomials of different dimension")
            return other
        return Polynomial.constant(self.dim, float(other))

    def __add__(self, other):
        other = self._coerce(other)
        out = dict(self.terms)
        for e, c in other.terms.items():
            out[e] = out.get(e, 0.0) + c
        return Polynomial(self.dim, out)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self.dim, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        other = self._coerce(other)
        out = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                out[e] = out.get(e, 0.0) + c1 * c2
        return Polynomial(self.dim, out)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        out = Polynomial.constant(self.dim)
        for _ in range(int(k)):
            out = out * self
        return out

    def __call__(self, x):
        return poly_eval(self, x)

    def derivative(self, i: int) -> "Polynomial":
        out = {}
        for e, c in self.terms.items():
            if e[i]:
                lowered = list(e)
                lowered[i] -= 1
                out[tuple(lowered)] = c * e[i]
        return Polynomial(self.dim, out)

    def coefficients(self, n: int | None = None) -> np.ndarray:
        """Dense coefficient vector in the degree-``n`` graded-lex basis."""
        n = self.degree if n is None else n
        basis = monomial_basis(self.dim, n)
        out = np.zeros(len(basis))
        for e, c in self.terms.items():
            out[basis.position[e]] = c
        return out

    @classmethod
    def from_coefficients(cls, dim, coefs):
        coefs = np.asarray(coefs, dtype=float)
        n = 0
        while dim_poly(dim, n) < coefs.size:
            n += 1
        if dim_poly(dim, n) != coefs.size:
            raise ValueError(f"{coefs.size} coefficients is not a full basis size for d={dim}")
        basis = monomial_basis(dim, n)
        return cls(dim, {basis.indices[i]: c for i, c in enumerate(coefs) if c != 0.0})

    def affine(self, center, scale) -> "Polynomial":
        """``q(y) = p(center + scale * y)``, the polynomial in shifted coordinates."""
        center = np.broadcast_to(np.asarray(center, dtype=float), (self.dim,))
        scale = np.broadcast_to(np.asarray(scale, dtype=float), (self.dim,))
        subs = [Polynomial(self.dim, {tuple(int(j == i) for j in range(self.dim)): scale[i],
                                      (0,) * self.dim: center[i]}) for i in range(self.dim)]
        out = Polynomial(self.dim, {})
        for e, c in self.terms.items():
            term = Polynomial.constant(self.dim, c)
            for i, k in enumerate(e):
                if k:
                    term = term * subs[i] ** k
            out = out + term
        return out

    def to_json(self) -> list[dict]:
        return [{"exp": list(e), "coef": c} for e, c in sorted(
            self.terms.items(), key=lambda t: (sum(t[0]), tuple(-v for v in t[0])))]

    @classmethod
    def from_json(cls, terms: Iterable[dict], dim: int | None = None):
        terms = list(terms)
        if dim is None:
            if not terms:
                raise ValueError("cannot infer the dimension of an empty term list")
            dim = len(terms[0]["exp"])
        return cls(dim, {tuple(t["exp"]): float(t["coef"]) for t in terms})

    def __repr__(self):
        if not self.terms:
            return f"Polynomial(dim={self.dim}, 0)"
        parts = []
        for e, c in sorted(self.terms.items(), key=lambda t: sum(t[0])):
            mono = "*".join(f"x{i + 1}" + (f"^{k}" if k > 1 else "")
                            for i, k in enumerate(e) if k) or "1"
            parts.append(f"{c:g}*{mono}")
        return f"Polynomial(dim={self.dim}, {' + '.join(parts)})"


def poly_eval(p: Polynomial, x) -> float | np.ndarray:
    """Evaluate ``p`` at one point (returns a float) or at rows of an array."""
    arr = np.asarray(x, dtype=float)
    single = arr.ndim <= 1 and not (p.dim == 1 and arr.ndim == 1 and arr.size > 1)
    pts = _as_points(arr, p.dim)
    vals = np.zeros(pts.shape[0])
    for e, c in p.terms.items():
        term = np.full(pts.shape[0], c)
        for i, k in enumerate(e):
            if k:
                term = term * pts[:, i] ** k
        vals += term
    return float(vals[0]) if single else vals
