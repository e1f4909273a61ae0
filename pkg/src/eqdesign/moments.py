"""Moment vectors, Riesz functionals, moment and localizing matrices."""

from __future__ import annotations

import functools
import io
import csv

import numpy as np

from .basis import Polynomial, dim_poly, monomial_basis, vandermonde
from .errors import DegreeError, InvalidDimensionError

PSD_RTOL = 1e-10


class MomentVector:
    """Truncated moment sequence ``(phi_alpha)_{|alpha| <= degree}``.

    Values are stored densely in graded-lex order, so the vector for a
    lower degree is a prefix of this one.
    """

    def __init__(self, dim: int, degree: int, values, probability: bool = False):
        self.dim = int(dim)
        self.degree = int(degree)
        values = np.array(values, dtype=float).ravel()
        expected = dim_poly(self.dim, self.degree)
        if values.size != expected:
            raise ValueError(
                f"moment vector of degree {degree} in {dim} variables needs {expected} "
                f"values, got {values.size}")
        if probability and abs(values[0] - 1.0) > 1e-12:
            raise ValueError(f"probability moment vector must have phi_0 = 1, got {values[0]!r}")
        values.setflags(write=False)
        self.values = values
        self.probability = probability

    @property
    def basis(self):
        return monomial_basis(self.dim, self.degree)

    def __getitem__(self, alpha):
        alpha = tuple(int(a) for a in np.atleast_1d(alpha))
        if len(alpha) != self.dim:
            raise InvalidDimensionError(f"index {alpha} does not have {self.dim} entries")
        if sum(alpha) > self.degree:
            raise DegreeError(f"moment {alpha} exceeds the stored degree {self.degree}")
        return float(self.values[self.basis.position[alpha]])

    def truncate(self, degree: int) -> "MomentVector":
        if degree > self.degree:
            raise DegreeError(f"cannot truncate degree-{self.degree} moments to degree {degree}")
        return MomentVector(self.dim, degree, self.values[:dim_poly(self.dim, degree)],
                            self.probability)

    def __repr__(self):
        return f"MomentVector(dim={self.dim}, degree={self.degree}, size={self.values.size})"

    @classmethod
    def from_atoms(cls, atoms, weights, degree: int) -> "MomentVector":
        """Moments of the atomic measure ``sum_i w_i delta_{x_i}``."""
        atoms = np.asarray(atoms, dtype=float)
        if atoms.ndim == 1:
            atoms = atoms.reshape(-1, 1)
        w = np.asarray(weights, dtype=float)
        vals = vandermonde(atoms, degree).T @ w
        return cls(atoms.shape[1], degree, vals, probability=abs(w.sum() - 1.0) <= 1e-12)

    # serialization

    def to_json(self) -> dict:
        return {
            "dim": self.dim,
            "degree": self.degree,
            "moments": [{"exp": list(a), "value": float(v)}
                        for a, v in zip(self.basis.indices, self.values)],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "MomentVector":
        dim, degree = int(obj["dim"]), int(obj["degree"])
        basis = monomial_basis(dim, degree)
        vals = np.full(len(basis), np.nan)
        for entry in obj["moments"]:
            vals[basis.position[tuple(entry["exp"])]] = float(entry["value"])
        if np.isnan(vals).any():
            missing = basis.indices[int(np.flatnonzero(np.isnan(vals))[0])]
            raise ValueError(f"moment vector JSON is missing index {missing}")
        return cls(dim, degree, vals, probability=abs(vals[0] - 1.0) <= 1e-12)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"e{i + 1}" for i in range(self.dim)] + ["value"])
        for a, v in zip(self.basis.indices, self.values):
            w.writerow(list(a) + [repr(float(v))])
        return buf.getvalue()


def riesz(phi: MomentVector, p: Polynomial) -> float:
    """Riesz functional ``phi(p) = sum_alpha p_alpha phi_alpha``."""
    if p.dim != phi.dim:
        raise InvalidDimensionError("polynomial and moment vector dimensions differ")
    total = 0.0
    pos = phi.basis.position
    for alpha, c in p.terms.items():
        if sum(alpha) > phi.degree:
            raise DegreeError(f"moment {alpha} is missing (moment vector has degree {phi.degree})")
        total += c * phi.values[pos[alpha]]
    return float(total)


@functools.lru_cache(maxsize=None)
def _shift_table(d, out_degree, in_degree, beta):
    """Positions of ``alpha + beta`` in the degree-``in_degree`` basis, alpha ranging over degree out_degree."""
    src = monomial_basis(d, in_degree).position
    return np.array([src[tuple(a + b for a, b in zip(alpha, beta))]
                     for alpha in monomial_basis(d, out_degree).indices], dtype=np.int64)


@functools.lru_cache(maxsize=None)
def _hankel_table(d, k):
    basis = monomial_basis(d, k)
    big = monomial_basis(d, 2 * k).position
    idx = np.empty((len(basis), len(basis)), dtype=np.int64)
    for i, a in enumerate(basis.indices):
        for j in range(i, len(basis)):
            b = basis.indices[j]
            idx[i, j] = idx[j, i] = big[tuple(x + y for x, y in zip(a, b))]
    return idx


def shifted_moments(phi: MomentVector, g: Polynomial) -> MomentVector:
    """Moments of the signed measure ``g . phi`` up to ``degree(phi) - deg(g)``."""
    if g.dim != phi.dim:
        raise InvalidDimensionError("generator and moment vector dimensions differ")
    out_degree = phi.degree - g.degree
    if out_degree < 0:
        raise DegreeError(f"generator of degree {g.degree} exceeds moment degree {phi.degree}")
    vals = np.zeros(dim_poly(phi.dim, out_degree))
    for beta, c in g.terms.items():
        vals += c * phi.values[_shift_table(phi.dim, out_degree, phi.degree, beta)]
    return MomentVector(phi.dim, out_degree, vals)


def moment_matrix(phi: MomentVector, k: int) -> np.ndarray:
    """Symmetric ``s_k x s_k`` matrix with entries ``phi_{alpha+beta}``."""
    if k < 0 or 2 * k > phi.degree:
        raise DegreeError(f"moment matrix of order {k} needs moments to degree {2 * k}, "
                          f"have {phi.degree}")
    return phi.values[:dim_poly(phi.dim, 2 * k)][_hankel_table(phi.dim, k)]


def localizing_matrix(phi: MomentVector, g: Polynomial, k: int) -> np.ndarray:
    """``M_k(g phi)``, i.e. the moment matrix of :func:`shifted_moments`."""
    if 2 * k + g.degree > phi.degree:
        raise DegreeError(f"localizing matrix of order {k} for a degree-{g.degree} generator "
                          f"needs moments to degree {2 * k + g.degree}, have {phi.degree}")
    return moment_matrix(shifted_moments(phi, g), k)


def is_psd(M: np.ndarray, rtol: float = PSD_RTOL) -> bool:
    """Min eigenvalue >= -rtol * trace."""
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return True
    lam = np.linalg.eigvalsh(M)
    return bool(lam[0] >= -rtol * max(np.trace(M), 0.0))


@functools.lru_cache(maxsize=64)
def _affine_table(d, degree, center, scale):
    # row alpha holds the x-coefficients of prod_i ((x_i - c_i) / s_i)^alpha_i
    basis = monomial_basis(d, degree)
    T = np.zeros((len(basis), len(basis)))
    factors = [Polynomial(d, {tuple(int(j == i) for j in range(d)): 1.0 / scale[i],
                              (0,) * d: -center[i] / scale[i]}) for i in range(d)]
    for row, alpha in enumerate(basis.indices):
        p = Polynomial.constant(d)
        for i, a in enumerate(alpha):
            if a:
                p = p * factors[i] ** a
        for e, c in p.terms.items():
            T[row, basis.position[e]] = c
    T.setflags(write=False)
    return T


def affine_moments(phi: MomentVector, center, scale) -> MomentVector:
    """Moments of the image measure under ``y = (x - center) / scale`` (coordinatewise)."""
    center = tuple(float(c) for c in np.broadcast_to(center, (phi.dim,)))
    scale = tuple(float(s) for s in np.broadcast_to(scale, (phi.dim,)))
    if all(c == 0.0 for c in center) and all(s == 1.0 for s in scale):
        return phi
    T = _affine_table(phi.dim, phi.degree, center, scale)
    return MomentVector(phi.dim, phi.degree, T @ phi.values, phi.probability)
