import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eqdesign.basis import Polynomial, dim_poly, vandermonde
from eqdesign.christoffel import (KernelEvaluator, VarianceFunction, build_kernel, cholesky,
                                  christoffel_value, christoffel_values, equilibrium_variance,
                                  set_frame, variance_function)
from eqdesign.equilibrium import (ball, box, equilibrium_moments, interval, simplex,
                                  variant_family)
from eqdesign.errors import SingularMomentMatrixError
from eqdesign.moments import MomentVector, moment_matrix


def _measure(rng, d, m=30):
    atoms = rng.uniform(-1, 1, size=(m, d))
    w = rng.uniform(0.2, 1, m)
    return atoms, w / w.sum()


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 3), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_kernel_matches_explicit_inverse(d, k, seed):
    rng = np.random.default_rng(seed)
    atoms, w = _measure(rng, d)
    phi = MomentVector.from_atoms(atoms, w, 2 * k)
    M = moment_matrix(phi, k)
    x = rng.uniform(-1.5, 1.5, size=(5, d))
    V = vandermonde(x, k)
    want = np.einsum("ij,ij->i", V @ np.linalg.inv(M), V)
    assert np.allclose(build_kernel(phi, k).kernel(x), want, rtol=1e-8)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 2), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_christoffel_function_is_variational_minimum(d, k, seed):
    rng = np.random.default_rng(seed)
    atoms, w = _measure(rng, d)
    phi = MomentVector.from_atoms(atoms, w, 2 * k)
    ev = build_kernel(phi, k)
    x = rng.uniform(-1, 1, d)
    lam = christoffel_value(ev, x)
    M = moment_matrix(phi, k)
    v = vandermonde(x[None, :], k)[0]
    # minimizer p = M^-1 v / (v^T M^-1 v) attains the bound
    p = np.linalg.solve(M, v)
    p /= v @ p
    assert p @ M @ p == pytest.approx(lam, rel=1e-8)
    for _ in range(5):
        q = rng.standard_normal(v.size)
        q /= v @ q
        assert q @ M @ q >= lam * (1 - 1e-10)


def test_reproducing_property():
    rng = np.random.default_rng(2)
    atoms, w = _measure(rng, 2)
    k = 2
    phi = MomentVector.from_atoms(atoms, w, 2 * k)
    M = moment_matrix(phi, k)
    x = np.array([0.3, -0.2])
    coef = rng.standard_normal(dim_poly(2, k))
    vx = vandermonde(x[None, :], k)[0]
    Va = vandermonde(atoms, k)
    Kxy = Va @ np.linalg.solve(M, vx)
    assert np.dot(w, Kxy * (Va @ coef)) == pytest.approx(vx @ coef)


def test_interval_kernel_against_chebyshev_closed_form():
    phi = equilibrium_moments(interval(), 12)
    ev = build_kernel(phi, 6)
    t = np.linspace(0, np.pi, 11)
    want = 1 + 2 * sum(np.cos(j * t) ** 2 for j in range(1, 7))
    assert np.allclose(ev.kernel(np.cos(t)), want, rtol=1e-10)


def test_frame_invariance_of_kernel_and_logdet():
    rng = np.random.default_rng(5)
    atoms = rng.dirichlet([1, 1, 1], size=40)[:, :2]
    w = np.full(40, 1 / 40)
    phi = MomentVector.from_atoms(atoms, w, 6)
    plain = build_kernel(phi, 3)
    framed = build_kernel(phi, 3, frame=((0.5, 0.5), (0.5, 0.5)))
    x = rng.uniform(0, 1, size=(7, 2))
    assert np.allclose(plain.kernel(x), framed.kernel(x), rtol=1e-9)
    direct = np.linalg.slogdet(moment_matrix(phi, 3))[1]
    assert framed.logdet() == pytest.approx(direct, abs=1e-8)
    assert plain.logdet() == pytest.approx(direct, abs=1e-8)


def test_kernel_gradient_matches_finite_differences():
    phi = equilibrium_moments(ball(2), 6)
    ev = build_kernel(phi, 3, frame=((0.1, 0.0), (1.2, 0.9)))
    x = np.array([[0.3, -0.4], [-0.6, 0.2]])
    _, g = ev.kernel_and_grad(x)
    h = 1e-6
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        fd = (ev.kernel(x + e) - ev.kernel(x - e)) / (2 * h)
        assert np.allclose(g[:, j], fd, rtol=1e-6, atol=1e-6)


def test_variance_function_gradient():
    S = simplex(2)
    phi = equilibrium_moments(S, 6)
    D = VarianceFunction(phi, 3, variant_family(S, 3), frame=set_frame(S))
    x = np.array([[0.2, 0.3], [0.6, 0.1]])
    _, g = D.value_and_grad(x)
    h = 1e-6
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        assert np.allclose(g[:, j], (D(x + e) - D(x - e)) / (2 * h), rtol=1e-5, atol=1e-5)


def test_singular_matrix_reports_pivot():
    phi = MomentVector.from_atoms(np.array([[-1.0], [1.0]]), [0.5, 0.5], 4)
    with pytest.raises(SingularMomentMatrixError) as info:
        build_kernel(phi, 2)
    assert info.value.pivot == 2


def test_cholesky_never_adds_jitter():
    M = np.array([[1.0, 1.0], [1.0, 1.0]])
    with pytest.raises(SingularMomentMatrixError):
        cholesky(M)
    L = cholesky(np.array([[4.0, 2.0], [2.0, 2.0]]))
    assert np.allclose(L @ L.T, [[4, 2], [2, 2]])


def test_singular_localizing_block_names_generator():
    S = interval()
    phi = MomentVector.from_atoms(np.array([[-1.0], [0.0], [1.0]]), np.full(3, 1 / 3), 4)
    with pytest.raises(SingularMomentMatrixError) as info:
        variance_function(S, phi, 2, 0.0)
    assert info.value.generator is not None


@pytest.mark.parametrize("S,n", [(interval(), 5), (ball(2), 3), (box(2), 3), (simplex(2), 3),
                                 (ball(3), 2), (simplex(3), 2)])
def test_equilibrium_variance_is_constant(S, n):
    D = equilibrium_variance(S, n)
    rng = np.random.default_rng(0)
    x = rng.uniform(-1.3, 1.3, size=(200, S.dim))
    assert np.max(np.abs(D(x) - D.trace)) <= 1e-8 * D.trace


def test_float_and_exact_paths_agree_inside():
    S = ball(2)
    phi = equilibrium_moments(S, 8)
    x = np.array([[0.1, 0.2], [0.0, -0.9], [0.5, 0.5]])
    fast = variance_function(S, phi, 4, x)
    assert np.allclose(fast, equilibrium_variance(S, 4)(x), rtol=1e-9)


def test_christoffel_values_are_reciprocal():
    ev = build_kernel(equilibrium_moments(interval(), 4), 2)
    x = np.array([[0.0], [0.5]])
    assert np.allclose(christoffel_values(ev, x) * ev.kernel(x), 1.0)


def test_christoffel_examples():
    ev = build_kernel(equilibrium_moments(interval(), 2), 1)
    assert christoffel_value(ev, [0.0]) == pytest.approx(1.0)
    assert christoffel_value(ev, [1.0]) == pytest.approx(1 / 3)


def test_variance_examples():
    S = interval()
    phi = equilibrium_moments(S, 2)
    x = np.linspace(-3, 3, 7)
    assert np.allclose(variance_function(S, phi, 1, x.reshape(-1, 1)), 3.0)
    B = ball(2)
    pts = np.random.default_rng(1).uniform(-2, 2, size=(50, 2))
    assert np.allclose(variance_function(B, equilibrium_moments(B, 4), 2, pts), 9.0, rtol=1e-9)
    one = [Polynomial.constant(2)]
    plain = build_kernel(equilibrium_moments(B, 4), 2).kernel(pts)
    assert np.allclose(variance_function(B, equilibrium_moments(B, 4), 2, pts, one), plain)
