import dataclasses

import numpy as np
import pytest

import hjisolve as hj
from hjisolve import ConfigurationError, ConvergenceError, StrategyField
from hjisolve.isaacs import CostPerturbation, extract_saddle, solve_single_player
from hjisolve.model import make_model_1d


def single_player_model():
    # drift -x with cost 0.375 x^2 (0.8 + 0.2 u2): the maximizer saturates
    # u2 = 1 and the growth rate has the closed form 1/4
    return make_model_1d(lambda x, u1, u2: -x,
                         lambda x, u1, u2: 0.375 * x * x * (0.8 + 0.2 * u2),
                         actions2=hj.ActionSet.from_values((0.0, 1.0)))


def test_control_independent_model_converges_in_one_iteration():
    model = hj.builtin_model("ou-benchmark")
    grid = hj.build_grid(1, 3.0, 0.05)
    solve = hj.dirichlet_isaacs(model, grid)
    assert solve.converged
    assert solve.iterations == 1
    assert solve.selector_changes[-1] == 0
    assert solve.damping_events == 0


def test_constant_cost_stays_below_the_constant():
    model = hj.model_from_spec({"d": 1, "drift": "-x", "diffusion": "1",
                                "cost": "0.3"})
    lam = {}
    for r in (2.0, 4.0):
        lam[r] = hj.dirichlet_isaacs(model, hj.build_grid(1, r, 0.05)).lambda_
    assert lam[2.0] < lam[4.0] < 0.3


def test_normalization_and_init_invariance():
    model = hj.builtin_model("game-1d")
    grid = hj.build_grid(1, 3.0, 0.05)
    base = hj.dirichlet_isaacs(model, grid)
    scaled = hj.dirichlet_isaacs(model, grid, v0=7.0 * np.ones(grid.n_interior))
    rng = np.random.default_rng(1)
    bumpy = hj.dirichlet_isaacs(model, grid,
                                v0=1.0 + 0.5 * rng.uniform(size=grid.n_interior))
    assert scaled.lambda_ == pytest.approx(base.lambda_, abs=1e-9)
    assert bumpy.lambda_ == pytest.approx(base.lambda_, abs=1e-9)
    assert np.allclose(scaled.eigen.phi, base.eigen.phi, atol=1e-7)
    assert np.allclose(bumpy.eigen.phi, base.eigen.phi, atol=1e-7)
    assert base.eigen.phi[grid.origin_index] == pytest.approx(1.0)


def test_bad_initial_field_rejected():
    model = hj.builtin_model("game-1d")
    grid = hj.build_grid(1, 2.0, 0.5)
    with pytest.raises(ConfigurationError):
        hj.dirichlet_isaacs(model, grid, v0=np.zeros(grid.n_interior))
    with pytest.raises(ConfigurationError):
        hj.dirichlet_isaacs(model, grid, v0=np.ones(3))
    with pytest.raises(ConfigurationError):
        hj.dirichlet_isaacs(model, grid, damping=1.5)


def test_residual_tracks_tolerance(game_solve):
    phi = game_solve.eigen.phi
    assert game_solve.hamiltonian_residual <= 10 * 1e-9 * max(1.0, phi.max())
    assert game_solve.eigen.cw_upper - game_solve.eigen.cw_lower <= 1e-7


def test_sweep_eigenvalues_nondecreasing(game_sweep):
    report = game_sweep["report"]
    assert report.converged
    assert not report.warnings
    assert np.all(np.diff(report.lambdas) >= -1e-10)
    assert report.extrapolated >= report.lambdas[-1] - 1e-12


def test_sweep_rejects_bad_radius_lists():
    model = hj.builtin_model("ou-benchmark")
    with pytest.raises(ConfigurationError):
        hj.radius_sweep(model, [], 0.5)
    with pytest.raises(ConfigurationError):
        hj.radius_sweep(model, [2.0, 2.0], 0.5)


def test_warm_start_does_not_change_the_answer():
    model = hj.builtin_model("game-1d")
    warm = hj.radius_sweep(model, [1.0, 2.0], 0.1, warm_start=True)
    cold = hj.radius_sweep(model, [1.0, 2.0], 0.1, warm_start=False)
    assert warm.lambdas == pytest.approx(cold.lambdas, abs=1e-9)


def test_saddle_selectors_are_mutual_best_responses(game_solve):
    grid = game_solve.grid
    model = hj.builtin_model("game-1d")
    v1, v2 = extract_saddle(game_solve)
    best2 = solve_single_player(model, grid, "maximize", frozen=v1)
    best1 = solve_single_player(model, grid, "minimize", frozen=v2)
    assert best2.lambda_ == pytest.approx(game_solve.lambda_, abs=1e-6)
    assert best1.lambda_ == pytest.approx(game_solve.lambda_, abs=1e-6)


def test_extract_saddle_requires_convergence(game_tiny_solve):
    v1, v2 = extract_saddle(game_tiny_solve)
    assert v1 is game_tiny_solve.v1 and v2 is game_tiny_solve.v2
    broken = dataclasses.replace(game_tiny_solve, converged=False)
    with pytest.raises(ConvergenceError):
        extract_saddle(broken)


def test_single_player_closed_form():
    model = single_player_model()
    grid = hj.build_grid(1, 5.0, 0.02)
    solve = solve_single_player(model, grid, "maximize")
    assert solve.converged
    assert solve.lambda_ == pytest.approx(0.25, abs=1e-3)
    xs = grid.interior_points()[:, 0]
    w2 = solve.v2.weights
    assert np.all(w2[xs != 0.0, 1] == 1.0)  # saturate the costlier action


def test_single_player_mode_validation():
    model = single_player_model()
    grid = hj.build_grid(1, 2.0, 0.5)
    with pytest.raises(ConfigurationError):
        solve_single_player(model, grid, "other")
    # player 2 has two actions, so minimizing needs a frozen field for it
    with pytest.raises(ConfigurationError):
        solve_single_player(model, grid, "minimize")


def test_bounded_cost_perturbation_trace():
    model = single_player_model()
    grid = hj.build_grid(1, 4.0, 0.05)
    pert = CostPerturbation(kind="bounded", delta=0.1, levels=(1.0, 2.0, 3.0))
    solve = solve_single_player(model, grid, "maximize", perturbation=pert)
    trace = solve.perturbation_trace
    assert [lvl for lvl, _ in trace] == [1.0, 2.0, 3.0]
    lams = [lam for _, lam in trace]
    # raising cost outside a growing ball keeps lambda above the base value
    # and the excess shrinks as the untouched region grows
    for lam in lams:
        assert lam >= solve.lambda_ - 1e-9
    assert np.all(np.diff(lams) <= 1e-9)
    assert lams[-1] - solve.lambda_ <= lams[0] - solve.lambda_


def test_unbounded_cost_perturbation_trace():
    model = single_player_model()
    grid = hj.build_grid(1, 4.0, 0.05)
    pert = CostPerturbation(kind="unbounded", levels=(1.0, 4.0, 16.0),
                            ell=lambda pts: 0.1 * pts[:, 0] ** 2)
    solve = solve_single_player(model, grid, "maximize", perturbation=pert)
    lams = [lam for _, lam in solve.perturbation_trace]
    for lam in lams:
        assert lam >= solve.lambda_ - 1e-9
    assert np.all(np.diff(lams) <= 1e-9)


def test_perturbation_validation():
    with pytest.raises(ConfigurationError):
        CostPerturbation(kind="weird")
    with pytest.raises(ConfigurationError):
        CostPerturbation(kind="unbounded")  # missing ell
    with pytest.raises(ConfigurationError):
        CostPerturbation(kind="bounded", levels=(0.0, 1.0))


def test_exhausted_outer_budget_reports_diagnostics():
    model = hj.builtin_model("game-1d")
    grid = hj.build_grid(1, 2.0, 0.1)
    with pytest.raises(ConvergenceError) as err:
        hj.dirichlet_isaacs(model, grid, max_outer=1)
    exc = err.value
    assert exc.iterations == 1
    assert exc.value is not None
    assert exc.lower is not None and exc.upper is not None
    assert "outer iterations" in str(exc)
