import numpy as np
import pytest
import scipy.sparse as sp

import hjisolve as hj
from hjisolve import ConvergenceError, StructureError
from hjisolve.eigen import cw_bounds, principal_eigenpair
from hjisolve.model import make_model_1d


def test_scalar_matrix():
    pair = principal_eigenpair(np.array([[2.0]]))
    assert pair.lambda_ == pytest.approx(2.0, abs=1e-12)
    assert pair.phi[0] == pytest.approx(1.0)


def test_symmetric_swap_matrix():
    pair = principal_eigenpair(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert pair.lambda_ == pytest.approx(1.0, abs=1e-10)
    assert np.allclose(pair.phi, [1.0, 1.0], atol=1e-8)
    assert pair.cw_lower <= pair.lambda_ <= pair.cw_upper


def test_dirichlet_laplacian_closed_form():
    # half-Laplacian row stencil (1, -2, 1)/(2 h^2) on (-1/2, 1/2);
    # principal eigenvalue is -(1 - cos(pi h)) / h^2
    h = 0.01
    grid = hj.build_grid(1, 0.5, h)
    model = make_model_1d(lambda x, u1, u2: 0.0 * x, lambda x, u1, u2: 0.0 * x)
    f1 = hj.StrategyField.constant(grid, model.actions1, 0)
    f2 = hj.StrategyField.constant(grid, model.actions2, 0)
    op = hj.assemble_fixed(model, grid, f1, f2)
    pair = principal_eigenpair(op, tol=1e-10)
    expect = -(1.0 - np.cos(np.pi * h)) / h**2
    assert pair.lambda_ == pytest.approx(expect, abs=1e-8)
    # eigenvector is the discrete cosine mode, normalized at the origin
    xs = grid.interior_points()[:, 0]
    assert np.allclose(pair.phi, np.cos(np.pi * xs), atol=1e-7)


def test_shift_equivariance():
    rng = np.random.default_rng(2)
    M = rng.uniform(0.0, 1.0, (12, 12))
    base = principal_eigenpair(M, tol=1e-12)
    shifted = principal_eigenpair(M + 3.0 * np.eye(12), tol=1e-12)
    assert shifted.lambda_ == pytest.approx(base.lambda_ + 3.0, abs=1e-9)
    assert np.allclose(shifted.phi, base.phi, atol=1e-8)


def test_matches_dense_eig_on_random_nonnegative():
    rng = np.random.default_rng(7)
    for _ in range(20):
        M = rng.uniform(0.0, 1.0, (20, 20)) + 0.01
        pair = principal_eigenpair(M, tol=1e-11)
        vals = np.linalg.eigvals(M)
        lead = vals[np.argmax(vals.real)]
        assert abs(lead.imag) < 1e-9
        assert pair.lambda_ == pytest.approx(lead.real, abs=1e-8)
        assert pair.cw_upper - pair.cw_lower <= 1e-11
        assert pair.residual <= 1e-11
        assert pair.phi.min() > 0


def test_envelope_brackets_the_eigenvalue():
    rng = np.random.default_rng(9)
    M = rng.uniform(0.0, 1.0, (15, 15))
    lead = max(np.linalg.eigvals(M).real)
    lo, hi = cw_bounds(sp.csr_matrix(M), np.ones(15))
    assert lo <= lead <= hi
    pair = principal_eigenpair(M)
    lo2, hi2 = cw_bounds(sp.csr_matrix(M), pair.phi)
    assert hi2 - lo2 <= 1e-9
    assert lo2 <= lead <= hi2


def test_reducible_matrix_rejected():
    M = np.array([[1.0, 1.0], [0.0, 2.0]])  # upper triangular: two components
    with pytest.raises(StructureError):
        principal_eigenpair(M)


def test_negative_offdiagonal_rejected_without_override():
    M = np.array([[0.0, -1.0], [1.0, 0.0]])
    with pytest.raises(StructureError):
        principal_eigenpair(M)


def test_override_attempts_nonmonotone_solve():
    # mildly non-monotone but still Perron-like: dominant positive part
    M = np.array([[2.0, 1.0, 0.0],
                  [1.0, 2.0, -1e-3],
                  [0.5, 1.0, 2.0]])
    pair = principal_eigenpair(M, override=True)
    lead = max(np.linalg.eigvals(M).real)
    assert pair.lambda_ == pytest.approx(lead, abs=1e-8)


def test_iteration_budget_raises_with_bracket():
    rng = np.random.default_rng(4)
    M = rng.uniform(0.0, 1.0, (30, 30))
    with pytest.raises(ConvergenceError) as err:
        principal_eigenpair(M, tol=1e-14, max_iter=1)
    exc = err.value
    assert exc.lower is not None and exc.upper is not None
    assert exc.lower <= max(np.linalg.eigvals(M).real) <= exc.upper
    assert exc.iterations == 1


def test_normalize_index_sets_unit_component():
    rng = np.random.default_rng(5)
    M = rng.uniform(0.5, 1.0, (8, 8))
    pair = principal_eigenpair(M, normalize_index=3)
    assert pair.phi[3] == pytest.approx(1.0)
    with pytest.raises(StructureError):
        principal_eigenpair(M, normalize_index=99)


def test_non_finite_entries_rejected():
    M = np.array([[1.0, np.nan], [1.0, 1.0]])
    with pytest.raises(StructureError):
        principal_eigenpair(M)


def test_fixed_pair_operator_eigenpair_positive():
    model = hj.builtin_model("game-1d")
    grid = hj.build_grid(1, 3.0, 0.05)
    f1 = hj.StrategyField.constant(grid, model.actions1, 0)
    f2 = hj.StrategyField.constant(grid, model.actions2, 1)
    op = hj.assemble_fixed(model, grid, f1, f2)
    pair = principal_eigenpair(op, tol=1e-10)
    assert pair.phi.min() > 0
    assert pair.phi[grid.origin_index] == pytest.approx(1.0)
    r = (op.matrix @ pair.phi) / pair.phi
    assert r.max() - r.min() <= 1e-10
