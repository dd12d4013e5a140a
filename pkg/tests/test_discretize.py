import numpy as np
import pytest

import hjisolve as hj
from hjisolve import ConfigurationError, StrategyField
from hjisolve.discretize import make_plan, nearest_interior, transfer_value
from hjisolve.errors import NondegeneracyError
from hjisolve.model import make_model_1d


def all_neighbors_interior(grid):
    """Mask of interior slots whose full stencil stays interior."""
    ok = np.ones(grid.n_interior, dtype=bool)
    for ax in range(grid.d):
        ok &= grid.interior_pos[grid.nb_plus[:, ax]] >= 0
        ok &= grid.interior_pos[grid.nb_minus[:, ax]] >= 0
    return ok


def test_grid_layout_1d():
    g = hj.build_grid(1, 2.0, 0.5)
    assert g.shape == (9,)
    assert g.n_interior == 7
    assert np.allclose(g.points[:, 0], np.arange(-4, 5) * 0.5)
    xs = g.interior_points()[:, 0]
    assert np.allclose(xs, np.arange(-3, 4) * 0.5)
    assert xs[g.origin_index] == 0.0
    # +h neighbour of slot k is the node one step to the right
    k = g.origin_index
    assert g.points[g.nb_plus[k, 0], 0] == pytest.approx(0.5)
    assert g.points[g.nb_minus[k, 0], 0] == pytest.approx(-0.5)


def test_grid_layout_2d():
    g = hj.build_grid(2, 1.0, 0.5)
    n = 5
    assert g.shape == (n, n)
    assert g.n_interior == (n - 2) ** 2
    assert g.boundary.size == n * n - (n - 2) ** 2
    assert np.allclose(g.points[g.interior][g.origin_index], [0.0, 0.0])
    k = g.origin_index
    assert np.allclose(g.points[g.nb_plus[k]], [[0.5, 0.0], [0.0, 0.5]])
    assert np.allclose(g.points[g.nb_diag[k, 0]], [0.5, 0.5])
    assert np.allclose(g.points[g.nb_diag[k, 3]], [-0.5, 0.5])


def test_grid_rejects_bad_spacing():
    with pytest.raises(ConfigurationError):
        hj.build_grid(1, 2.0, 0.3)  # does not divide
    with pytest.raises(ConfigurationError):
        hj.build_grid(1, 2.0, -0.5)
    with pytest.raises(ConfigurationError):
        hj.build_grid(1, -1.0, 0.5)
    with pytest.raises(ConfigurationError):
        hj.build_grid(3, 2.0, 0.5)
    with pytest.raises(ConfigurationError):
        hj.build_grid(1, 1.0, 4.0)  # no interior left


def test_peclet_switching():
    strong = make_model_1d(lambda x, u1, u2: -10.0 * x, lambda x, u1, u2: 0.0 * x)
    grid = hj.build_grid(1, 2.0, 0.25)
    plan = make_plan(strong, grid)
    xs = grid.interior_points()[:, 0]
    expect_central = 0.25 * 10.0 * np.abs(xs) <= 1.0 + 1e-12
    assert np.array_equal(plan.central, expect_central)
    assert plan.peclet_margin == pytest.approx(0.25 * 10.0 * 1.75)

    ou = hj.builtin_model("ou-benchmark")
    fine = hj.build_grid(1, 2.0, 0.05)
    assert np.all(make_plan(ou, fine).central)


def test_degenerate_diffusion_rejected():
    flat = make_model_1d(lambda x, u1, u2: -x, lambda x, u1, u2: 0.0 * x,
                         diffusion_fn=lambda x: 0.0 * x)
    with pytest.raises(NondegeneracyError):
        make_plan(flat, hj.build_grid(1, 1.0, 0.5))


def fields_for(model, grid, i, j):
    f1 = StrategyField.constant(grid, model.actions1, i)
    f2 = StrategyField.constant(grid, model.actions2, j)
    return f1, f2


@pytest.mark.parametrize("name,radius,h", [("game-1d", 2.0, 0.5),
                                           ("example-2.5", 3.0, 0.25)])
def test_tensor_matches_assembled_rows_for_pure_pairs(name, radius, h):
    model = hj.builtin_model(name)
    grid = hj.build_grid(1, radius, h)
    plan = make_plan(model, grid)
    rng = np.random.default_rng(3)
    V = rng.uniform(0.5, 2.0, grid.n_interior)
    H, _ = hj.hamiltonian_tensor(plan, V)
    for i, j, _, _ in model.pure_pairs():
        f1, f2 = fields_for(model, grid, i, j)
        op = hj.assemble_fixed(model, grid, f1, f2, plan=plan)
        assert np.allclose(op.matrix @ V, H[:, i, j], rtol=0, atol=1e-12)


def test_tensor_matches_assembled_rows_mixed_stencil():
    # strong drift forces upwind rows near the edges, central near zero
    model = make_model_1d(lambda x, u1, u2: -10.0 * x + u1 - u2,
                          lambda x, u1, u2: 0.1 * x * x,
                          actions1=hj.ActionSet.from_values((0.0, 1.0)),
                          actions2=hj.ActionSet.from_values((0.0, 1.0)))
    grid = hj.build_grid(1, 2.0, 0.25)
    plan = make_plan(model, grid)
    assert plan.central.any() and (~plan.central).any()
    V = np.random.default_rng(0).uniform(0.5, 2.0, grid.n_interior)
    H, central = hj.hamiltonian_tensor(plan, V)
    assert np.array_equal(central, plan.central)
    for i, j, _, _ in model.pure_pairs():
        f1, f2 = fields_for(model, grid, i, j)
        op = hj.assemble_fixed(model, grid, f1, f2, plan=plan)
        assert np.allclose(op.matrix @ V, H[:, i, j], rtol=0, atol=1e-12)


def test_assembled_operator_is_bilinear_at_central_points():
    model = hj.builtin_model("game-1d")
    grid = hj.build_grid(1, 2.0, 0.25)
    plan = make_plan(model, grid)
    rng = np.random.default_rng(11)
    w1 = rng.dirichlet((1.0, 1.0), size=grid.n_interior)
    w2 = rng.dirichlet((1.0, 1.0), size=grid.n_interior)
    f1 = StrategyField(grid=grid, actions=model.actions1, weights=w1)
    f2 = StrategyField(grid=grid, actions=model.actions2, weights=w2)
    V = rng.uniform(0.5, 2.0, grid.n_interior)
    H, _ = hj.hamiltonian_tensor(plan, V)
    mixed = np.einsum("ki,kj,kij->k", f1.weights, f2.weights, H)
    got = hj.assemble_fixed(model, grid, f1, f2, plan=plan).matrix @ V
    assert np.allclose(got[plan.central], mixed[plan.central], atol=1e-12)


def test_constant_field_reduces_to_cost():
    model = hj.builtin_model("game-1d")
    grid = hj.build_grid(1, 2.0, 0.25)
    plan = make_plan(model, grid)
    V = np.ones(grid.n_interior)
    H, _ = hj.hamiltonian_tensor(plan, V)
    deep = all_neighbors_interior(grid)
    for i, j, _, _ in model.pure_pairs():
        assert np.allclose(H[deep, i, j], plan.c_pairs[i, j, deep], atol=1e-12)


def test_monotone_upwind_operator():
    model = hj.builtin_model("ou-benchmark")
    grid = hj.build_grid(1, 6.0, 0.25)  # Peclet fails for |x| > 4
    plan = make_plan(model, grid)
    f1, f2 = fields_for(model, grid, 0, 0)
    op = hj.assemble_fixed(model, grid, f1, f2, plan=plan)
    assert op.monotone
    assert 0.0 < op.upwind_fraction < 1.0
    off = op.matrix.copy()
    off.setdiag(0.0)
    assert off.data.min() >= -1e-14

    fine = hj.build_grid(1, 3.0, 0.05)
    op2 = hj.assemble_fixed(model, fine, *fields_for(model, fine, 0, 0))
    assert op2.monotone
    assert op2.upwind_fraction == 0.0
    assert op2.peclet_margin <= 1.0


def test_field_shape_rejected():
    model = hj.builtin_model("game-1d")
    grid = hj.build_grid(1, 1.0, 0.5)
    other = hj.build_grid(1, 2.0, 0.5)
    f1 = StrategyField.constant(other, model.actions1, 0)
    f2 = StrategyField.constant(grid, model.actions2, 0)
    with pytest.raises(ConfigurationError):
        hj.assemble_fixed(model, grid, f1, f2)


def test_laplacian_row_values():
    # pure second difference: sigma = sqrt(2) makes (1/2) a = 1
    model = make_model_1d(lambda x, u1, u2: 0.0 * x, lambda x, u1, u2: 0.0 * x,
                          sigma=np.sqrt(2.0))
    grid = hj.build_grid(1, 1.0, 0.25)
    op = hj.assemble_fixed(model, grid, *fields_for(model, grid, 0, 0))
    A = op.matrix.toarray()
    hh = 0.25 ** 2
    k = grid.origin_index
    assert A[k, k] == pytest.approx(-2.0 / hh)
    assert A[k, k - 1] == pytest.approx(1.0 / hh)
    assert A[k, k + 1] == pytest.approx(1.0 / hh)


def test_nearest_interior_lookup_and_clamping():
    grid = hj.build_grid(1, 2.0, 0.5)
    slots, clamped = nearest_interior(grid, np.array([[0.6], [-0.2], [5.0]]))
    xs = grid.interior_points()[:, 0]
    assert xs[slots[0]] == pytest.approx(0.5)
    assert xs[slots[1]] == pytest.approx(0.0)
    assert xs[slots[2]] == pytest.approx(1.5)
    assert not clamped[0] and not clamped[1] and clamped[2]


def test_transfer_value_1d_linear_exact():
    old = hj.build_grid(1, 2.0, 0.5)
    vals = old.interior_points()[:, 0].copy()
    new = hj.build_grid(1, 3.0, 0.25)
    out = transfer_value(old, vals, new)
    xs = new.interior_points()[:, 0]
    expect = np.clip(xs, -1.5, 1.5)
    assert np.allclose(out, expect, atol=1e-12)


def test_transfer_value_2d_linear_exact_inside():
    old = hj.build_grid(2, 2.0, 0.5)
    pts = old.interior_points()
    vals = pts[:, 0] + 2.0 * pts[:, 1]
    new = hj.build_grid(2, 1.0, 0.25)
    out = transfer_value(old, vals, new)
    npts = new.interior_points()
    assert np.allclose(out, npts[:, 0] + 2.0 * npts[:, 1], atol=1e-12)


def test_two_dimensional_assembly_consistency():
    model = hj.model_from_spec({
        "d": 2,
        "drift": ["-x1 + 0.5*u2", "-x2 - 0.5*u1"],
        "diffusion": [["1", "0.3"], ["0.3", "1"]],
        "cost": "0.2*(x1*x1 + x2*x2) + 0.1*u1*u2",
        "actions1": {"values": [0.0, 1.0]},
        "actions2": {"values": [0.0, 1.0]},
    })
    grid = hj.build_grid(2, 1.5, 0.25)
    plan = make_plan(model, grid)
    assert plan.cross_dominant.all()
    V = np.random.default_rng(5).uniform(0.5, 2.0, grid.n_interior)
    H, _ = hj.hamiltonian_tensor(plan, V)
    for i, j, _, _ in model.pure_pairs():
        f1, f2 = fields_for(model, grid, i, j)
        op = hj.assemble_fixed(model, grid, f1, f2, plan=plan)
        assert op.monotone
        assert np.allclose(op.matrix @ V, H[:, i, j], rtol=0, atol=1e-11)
