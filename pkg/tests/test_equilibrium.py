from fractions import Fraction

import numpy as np
import pytest
from scipy import integrate, special

from eqdesign.basis import Polynomial, dim_poly, multi_indices, vandermonde
from eqdesign.equilibrium import (SemiAlgebraicSet, arcsine_moment, ball, box,
                                  description_family, equilibrium_moments, family_trace,
                                  gauss_chebyshev, generator_set, interval, make_set, simplex,
                                  tensor_chebyshev, variant_family)
from eqdesign.errors import InvalidDimensionError, UnsupportedKindError


def test_disk_moments_closed_form():
    phi = equilibrium_moments(ball(2), 4)
    assert phi[(0, 0)] == 1.0
    assert phi[(2, 0)] == pytest.approx(1 / 3, abs=1e-15)
    assert phi[(4, 0)] == pytest.approx(1 / 5, abs=1e-15)
    assert phi[(2, 2)] == pytest.approx(1 / 15, abs=1e-15)
    assert phi[(1, 0)] == 0.0 and phi[(3, 1)] == 0.0


def test_arcsine_moments_against_chebyshev_quadrature():
    # 1e5-node Gauss-Chebyshev quadrature as an independent oracle
    t = (2 * np.arange(1, 100001) - 1) * np.pi / 200000
    x = np.cos(t)
    for k in range(13):
        assert arcsine_moment(k) == pytest.approx(np.mean(x ** k), abs=1e-12)


def _disk_moment_by_quadrature(a, b):
    # density (1 - r^2)^(-1/2) / (2 pi) in polar coordinates
    ang, _ = integrate.quad(lambda t: np.cos(t) ** a * np.sin(t) ** b, 0, 2 * np.pi, limit=200)
    rad, _ = integrate.quad(lambda s: np.sin(s) ** (a + b + 1), 0, np.pi / 2)
    return ang * rad / (2 * np.pi)


def test_disk_moments_against_polar_quadrature():
    phi = equilibrium_moments(ball(2), 6)
    for a, b in multi_indices(2, 6):
        assert phi[(a, b)] == pytest.approx(_disk_moment_by_quadrature(a, b), abs=1e-10)


def test_ball_moments_are_projected_sphere_moments():
    # uniform measure on the unit sphere of R^(d+1), projected to R^d
    rng = np.random.default_rng(7)
    u = rng.standard_normal((400000, 4))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    x = u[:, :3]
    phi = equilibrium_moments(ball(3), 4)
    for alpha in multi_indices(3, 4):
        mc = np.mean(np.prod(x ** np.array(alpha), axis=1))
        assert phi[alpha] == pytest.approx(mc, abs=4e-3)


def test_simplex_moments_against_gamma_formula():
    for d in (1, 2, 3):
        phi = equilibrium_moments(simplex(d), 5)
        for alpha in multi_indices(d, 5):
            a = np.array(alpha, dtype=float)
            log_m = (np.sum(special.gammaln(a + 0.5)) - d * special.gammaln(0.5)
                     + special.gammaln((d + 1) / 2) - special.gammaln((d + 1) / 2 + a.sum()))
            assert phi[alpha] == pytest.approx(np.exp(log_m), rel=1e-12)


def test_simplex_moments_against_dirichlet_sampling():
    rng = np.random.default_rng(3)
    x = rng.dirichlet([0.5, 0.5, 0.5], size=400000)[:, :2]
    phi = equilibrium_moments(simplex(2), 3)
    for alpha in multi_indices(2, 3):
        assert phi[alpha] == pytest.approx(np.mean(np.prod(x ** np.array(alpha), axis=1)),
                                           abs=3e-3)


def test_box_moments_factorize():
    phi = equilibrium_moments(box(2), 6)
    assert phi[(2, 4)] == pytest.approx(arcsine_moment(2) * arcsine_moment(4))


def test_frame_moments_match_image_measure():
    S = simplex(2)
    phi = equilibrium_moments(S, 4, frame=((0.5, 0.5), (0.5, 0.5)))
    rng = np.random.default_rng(0)
    x = rng.dirichlet([0.5] * 3, size=300000)[:, :2]
    y = (x - 0.5) / 0.5
    for alpha in [(1, 0), (2, 0), (1, 1), (0, 4)]:
        assert phi[alpha] == pytest.approx(np.mean(np.prod(y ** np.array(alpha), axis=1)),
                                           abs=1e-2)


def test_custom_sets_have_no_closed_form():
    x = Polynomial.variable(1, 0)
    S = SemiAlgebraicSet(1, "custom", (1 - x * x,))
    with pytest.raises(UnsupportedKindError):
        equilibrium_moments(S, 2)


def test_set_validation():
    with pytest.raises(InvalidDimensionError):
        make_set("interval", 2)
    with pytest.raises(UnsupportedKindError):
        make_set("torus", 2)
    with pytest.raises(InvalidDimensionError):
        SemiAlgebraicSet(0, "ball")
    with pytest.raises(InvalidDimensionError):
        SemiAlgebraicSet(2, "custom", (Polynomial.variable(1, 0),))


def test_contains():
    S = simplex(2)
    assert S.contains(np.array([[0.2, 0.3], [0.8, 0.3], [-0.1, 0.5]])).tolist() == \
        [True, False, False]


def _keys(family):
    return sorted(tuple(sorted(g.terms.items())) for g, _ in family)


def test_ball_family():
    fam = generator_set("ball", 2, 3)
    assert len(fam) == 2 and [dg for _, dg in fam] == [0, 1]


def test_box_family_respects_block_orders():
    assert len(generator_set("box", 2, 1)) == 3
    fam = generator_set("box", 2, 2)
    assert len(fam) == 4 and [dg for _, dg in fam] == [0, 1, 1, 2]
    assert len(generator_set("box", 3, 2)) == 7


def test_simplex_family_uses_even_products():
    x1, x2 = Polynomial.variable(2, 0), Polynomial.variable(2, 1)
    last = 1 - x1 - x2
    fam = generator_set("simplex", 2, 1)
    want = [(Polynomial.constant(2), 0), (x1 * x2, 1), (x1 * last, 1), (x2 * last, 1)]
    assert _keys(fam) == _keys(want)
    # d = 3: the empty product, six pairs and the quadruple product (order n - 2)
    assert len(generator_set("simplex", 3, 1)) == 7
    assert len(generator_set("simplex", 3, 2)) == 8


def test_interval_family_is_one_dimensional_box():
    assert _keys(generator_set("interval", 1, 3)) == _keys(generator_set("box", 1, 3))


def test_description_family_and_trace():
    fam = description_family(simplex(2), 3)
    assert len(fam) == 4
    assert family_trace(fam, 2, 3) == dim_poly(2, 3) + 3 * dim_poly(2, 2)
    assert family_trace(variant_family(interval(), 4), 1, 4) == 9


def test_gauss_chebyshev_exactness():
    for n in range(6):
        rule = gauss_chebyshev(n)
        assert len(rule) == n + 1 and rule.exact_degree == 2 * n + 1
        assert rule.moment_residual() <= 1e-14
        # degree 2n + 2 is not integrated exactly
        got = np.sum(rule.weights * rule.atoms[:, 0] ** (2 * n + 2))
        assert abs(got - arcsine_moment(2 * n + 2)) > 1e-5


def test_tensor_chebyshev_exact_to_total_degree_2n():
    rule = tensor_chebyshev(2, 3)
    assert len(rule) == 16 and rule.exact_degree == 6
    target = equilibrium_moments(box(2), 6)
    got = vandermonde(rule.atoms, 6).T @ rule.weights
    assert np.max(np.abs(got - target.values)) <= 1e-14


def test_tensor_rule_size_guard():
    with pytest.raises(OverflowError):
        tensor_chebyshev(8, 9)


def test_rule_csv():
    lines = gauss_chebyshev(1).to_csv().strip().splitlines()
    assert lines[0] == "x1,weight" and len(lines) == 3


def test_exact_rationals():
    from eqdesign.equilibrium import _exact_moments_cached

    vals = _exact_moments_cached("ball", 2, 4)
    assert Fraction(1, 15) in vals and all(isinstance(v, Fraction) for v in vals)


def test_moment_examples():
    vals = equilibrium_moments(interval(), 4).values
    assert np.allclose(vals, [1, 0, 0.5, 0, 0.375], atol=1e-15)
    phi = equilibrium_moments(simplex(2), 2)
    assert phi[(1, 0)] == pytest.approx(1 / 3) and phi[(1, 1)] == pytest.approx(1 / 15)
    nz = sorted(set(np.round(equilibrium_moments(ball(2), 4).values, 12)) - {0.0})
    assert np.allclose(nz, [1 / 15, 1 / 5, 1 / 3, 1])


def test_family_examples():
    x = Polynomial.variable(1, 0)
    assert _keys(generator_set("box", 1, 2)) == _keys([(Polynomial.constant(1), 0), (1 - x * x, 1)])
    assert len(generator_set("box", 2, 2)) == 4


def test_rule_examples():
    r = gauss_chebyshev(2)
    assert np.allclose(np.sort(r.atoms[:, 0]), [-np.sqrt(3) / 2, 0, np.sqrt(3) / 2])
    assert np.allclose(r.weights, 1 / 3)
    r0 = gauss_chebyshev(0)
    assert r0.atoms.tolist() == [[0.0]] and r0.weights.tolist() == [1.0]
    t = tensor_chebyshev(2, 1)
    assert np.allclose(np.abs(t.atoms), np.sqrt(2) / 2) and np.allclose(t.weights, 0.25)
    t2 = tensor_chebyshev(2, 2)
    assert np.dot(t2.weights, t2.atoms[:, 0] ** 2 * t2.atoms[:, 1] ** 2) == pytest.approx(0.25)
    t1 = tensor_chebyshev(1, 3)
    assert np.allclose(t1.atoms, gauss_chebyshev(3).atoms)
