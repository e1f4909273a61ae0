import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eqdesign.basis import Polynomial, dim_poly
from eqdesign.christoffel import equilibrium_variance
from eqdesign.equilibrium import (SemiAlgebraicSet, ball, box, equilibrium_moments,
                                  gauss_chebyshev, interval, simplex)
from eqdesign.solver import (CandidateGrid, DesignMeasure, default_grid, equivalence_gap,
                             gauss_rule, normalize_objective, objective_from_moments,
                             objective_value, refine_grid, solve_design)


def test_objective_examples():
    S = interval()
    r = gauss_chebyshev(1)
    nu = DesignMeasure(r.atoms, r.weights)
    assert objective_value(S, nu, 1, "classical") == pytest.approx(-np.log(2))
    assert objective_value(S, nu, 1, "variant") == pytest.approx(-2 * np.log(2))


def test_objective_is_minus_infinity_below_s_n_atoms():
    nu = DesignMeasure(np.array([[0.1, 0.2], [0.5, 0.3]]), [0.5, 0.5])
    assert objective_value(ball(2), nu, 1) == float("-inf")


def test_objective_from_moments_agrees_with_atoms():
    rng = np.random.default_rng(0)
    atoms = rng.dirichlet([1, 1, 1], size=30)[:, :2]
    nu = DesignMeasure(atoms, rng.uniform(0.1, 1, 30))
    S = simplex(2)
    for kind in ("classical", "variant"):
        assert objective_from_moments(S, nu.moments(6), 3, kind) == \
            pytest.approx(objective_value(S, nu, 3, kind), abs=1e-8)


def test_objective_aliases():
    assert normalize_objective("classic") == "classical"
    with pytest.raises(ValueError):
        normalize_objective("A-optimal")


def test_interval_classical_n2():
    design, report = solve_design(interval(), 2, "classical")
    assert np.allclose(np.sort(design.atoms[:, 0]), [-1, 0, 1], atol=1e-4)
    assert np.allclose(design.weights, 1 / 3, atol=1e-4)
    assert report.converged and report.gap <= 1e-6 * 3


def test_interval_variant_is_chebyshev():
    design, report = solve_design(interval(), 4, "variant")
    assert np.allclose(np.sort(design.atoms[:, 0]), np.sort(np.cos((2 * np.arange(1, 6) - 1)
                                                                   * np.pi / 10)), atol=1e-4)
    assert np.allclose(design.weights, 0.2, atol=1e-4)


@pytest.mark.parametrize("S,n", [(ball(2), 2), (box(2), 2), (simplex(2), 2)])
def test_variant_optimum_is_equilibrium_value(S, n):
    design, report = solve_design(S, n, "variant")
    assert report.converged
    assert report.objective == pytest.approx(equilibrium_variance(S, n).logdet(), abs=1e-6)
    assert design.check_support(S)


def test_variant_design_moments_match_equilibrium():
    S = simplex(2)
    design, _ = solve_design(S, 2, "variant")
    assert np.max(np.abs(design.moments(4).values - equilibrium_moments(S, 4).values)) <= 1e-4


def test_report_contents():
    design, report = solve_design(ball(2), 1, "classical")
    assert report.block_dims == [3]
    assert report.trace == 3
    assert report.grid_size == len(default_grid(ball(2)))
    assert report.halvings >= 0 and report.iterations > 0
    assert set(report.to_json()) >= {"objective", "gap", "iterations", "converged"}
    assert design.weights.sum() == pytest.approx(1.0)


def test_polish_off_still_reports_grid_design():
    design, report = solve_design(interval(), 2, "classical", polish=False, max_iter=500)
    assert report.polish_rounds == 0
    assert objective_value(interval(), design, 2) <= report.objective + 1e-12


def test_user_grid_is_validated():
    with pytest.raises(ValueError):
        solve_design(interval(), 2, grid=np.array([[0.0], [2.0], [0.5], [-0.5]]))
    with pytest.raises(ValueError):
        solve_design(interval(), 3, grid=np.array([[0.0], [0.5], [-0.5]]))
    with pytest.raises(ValueError):
        solve_design(ball(2), 1, grid=np.zeros((10, 3)))


def test_singular_uniform_design_triggers_one_restart():
    grid = np.array([[0.0], [0.0], [0.5]])
    design, report = solve_design(interval(), 2, "classical", grid=grid)
    assert report.restarts == 1 and report.converged


def test_deterministic_under_seed():
    a, ra = solve_design(box(2), 1, "variant", rng=np.random.default_rng(3))
    b, rb = solve_design(box(2), 1, "variant", rng=np.random.default_rng(3))
    assert np.array_equal(a.atoms, b.atoms) and np.array_equal(a.weights, b.weights)
    assert ra.gap == rb.gap


def test_gap_examples():
    S = interval()
    opt = DesignMeasure(np.array([[-1.0], [0.0], [1.0]]), np.full(3, 1 / 3))
    assert equivalence_gap(S, opt, 2, "classical").gap <= 1e-9
    five = DesignMeasure(np.linspace(-1, 1, 5).reshape(-1, 1), np.full(5, 0.2))
    assert equivalence_gap(S, five, 2, "classical").gap > 0.1 * 3
    B = ball(2)
    rep = equivalence_gap(B, equilibrium_moments(B, 4), 2, "variant")
    assert abs(rep.gap) <= 1e-9 and rep.trace == 9


def test_gap_is_nonnegative_for_probability_designs():
    rng = np.random.default_rng(8)
    S = ball(2)
    pts = default_grid(S).points[rng.choice(len(default_grid(S)), 40, replace=False)]
    nu = DesignMeasure(pts, rng.uniform(0.1, 1, 40))
    # the weighted mean of D is the trace, so its maximum is at least the trace
    assert equivalence_gap(S, nu, 2, "classical").gap >= 0


def test_refine_grid_finds_endpoints():
    S = interval()
    grid = CandidateGrid(np.linspace(-0.95, 0.95, 11))
    nu = DesignMeasure(np.linspace(-0.95, 0.95, 11).reshape(-1, 1), np.full(11, 1 / 11))
    refined = refine_grid(S, nu, 2, "classical", grid=grid)
    pts = refined.points[:, 0]
    assert np.min(np.abs(pts - 1)) <= 1e-6 and np.min(np.abs(pts + 1)) <= 1e-6


def test_refine_grid_keeps_grid_when_variance_is_constant():
    S = interval()
    rule = gauss_chebyshev(3)
    nu = DesignMeasure(rule.atoms, rule.weights)
    grid = CandidateGrid(np.linspace(-1, 1, 21))
    assert refine_grid(S, nu, 3, "variant", grid=grid) is grid


def test_refine_grid_ball_adds_points():
    S = ball(2)
    pts = default_grid(S).points[::50]
    nu = DesignMeasure(pts, np.ones(len(pts)))
    refined = refine_grid(S, nu, 2, "variant")
    assert len(refined) > len(default_grid(S))
    assert S.contains(refined.points, 1e-9).all()


def test_gauss_rule_of_arcsine_grid_measure():
    rule = gauss_chebyshev(20)
    nodes, w = gauss_rule(rule.atoms[:, 0], rule.weights, 5)
    assert np.allclose(np.sort(nodes), np.sort(np.cos((2 * np.arange(1, 6) - 1) * np.pi / 10)))
    assert np.allclose(w, 0.2)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_gauss_rule_reproduces_moments(m, seed):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, 40)
    w = rng.uniform(0.1, 1, 40)
    w /= w.sum()
    nodes, v = gauss_rule(x, w, m)
    for k in range(2 * m):
        assert np.dot(v, nodes ** k) == pytest.approx(np.dot(w, x ** k), abs=1e-10)


def test_design_measure_validation_and_json():
    with pytest.raises(ValueError):
        DesignMeasure(np.zeros((2, 1)), [0.5, -0.5])
    with pytest.raises(ValueError):
        DesignMeasure(np.zeros((2, 1)), [1.0])
    nu = DesignMeasure(np.array([[0.25], [0.5]]), [1.0, 3.0])
    assert np.allclose(nu.weights, [0.25, 0.75])
    back = DesignMeasure.from_json(nu.to_json())
    assert np.array_equal(back.atoms, nu.atoms) and np.array_equal(back.weights, nu.weights)


def test_default_grids_lie_in_their_sets():
    for S in (interval(), ball(2), ball(3), box(2), box(3), simplex(2), simplex(3)):
        g = default_grid(S)
        assert S.contains(g.points, 1e-12).all()
        assert len(g) >= dim_poly(S.dim, 8)


def test_custom_disk_matches_builtin_variant_value():
    d = 2
    g = Polynomial.constant(d)
    for i in range(d):
        g = g - Polynomial.variable(d, i) ** 2
    S = SemiAlgebraicSet(d, "custom", (g,), bbox=((-1, 1), (-1, 1)))
    design, report = solve_design(S, 2, "variant", rng=np.random.default_rng(0))
    assert report.converged
    assert report.objective == pytest.approx(equilibrium_variance(ball(2), 2).logdet(), abs=1e-5)
