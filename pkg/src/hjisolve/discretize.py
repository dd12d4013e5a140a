"""Finite-difference discretisation of controlled generators on boxes.

The domain is the box [-R, R]^d with uniform spacing h and homogeneous
Dirichlet data: values at boundary nodes are hard-coded zero, so operators
act on interior nodes only.  Diffusion uses central second differences
(the positivity-preserving 7-point splitting for 2-d cross terms when the
diffusion matrix is diagonally dominant).  Drift uses central differences
wherever the cell Peclet condition h |b_i| <= a_ii holds for every pure
action pair, which keeps the per-point Hamiltonian bilinear in the two
players' mixtures; otherwise first-order upwinding is used and the point is
flagged, since upwinding ties the stencil to the drift sign and breaks
bilinearity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError, ModelEvaluationError, NondegeneracyError
from .matrixgame import MatrixGame
from .model import GameModel

__all__ = [
    "Grid",
    "DiscreteOperator",
    "StencilPlan",
    "build_grid",
    "make_plan",
    "assemble_fixed",
    "hamiltonian_matrix",
    "hamiltonian_tensor",
    "nearest_interior",
    "transfer_value",
]


@dataclass(frozen=True)
class Grid:
    """A uniform lattice on [-radius, radius]^d with Dirichlet boundary."""

    d: int
    radius: float
    h: float
    shape: tuple[int, ...]
    points: np.ndarray        # (Ntot, d) node coordinates, row-major
    interior: np.ndarray      # flat indices of interior nodes
    boundary: np.ndarray      # flat indices of boundary nodes
    origin_index: int         # slot of the node nearest the origin, in interior order
    interior_pos: np.ndarray  # (Ntot,) slot in `interior`, or -1
    nb_plus: np.ndarray       # (Ni, d) flat index of the +h neighbour per axis
    nb_minus: np.ndarray      # (Ni, d)
    nb_diag: np.ndarray | None  # (Ni, 4) flat indices of (++, --, +-, -+), d=2 only

    @property
    def n_interior(self) -> int:
        return int(self.interior.size)

    def interior_points(self) -> np.ndarray:
        return self.points[self.interior]


def build_grid(d: int, radius: float, h: float) -> Grid:
    """Lay out the lattice.  The spacing must divide the radius."""
    if d not in (1, 2):
        raise ConfigurationError("grid.d", f"dimension must be 1 or 2, got {d}")
    if not (h > 0) or not np.isfinite(h):
        raise ConfigurationError("grid.h", f"spacing must be positive, got {h}")
    if not (radius > 0) or not np.isfinite(radius):
        raise ConfigurationError("grid.radius", f"radius must be positive, got {radius}")
    n_half = int(round(radius / h))
    if n_half < 1:
        raise ConfigurationError("grid.h", f"spacing {h} too coarse for radius {radius}")
    if abs(n_half * h - radius) > 1e-9 * max(1.0, radius):
        raise ConfigurationError(
            "grid.h", f"spacing {h} does not divide radius {radius}")
    n = 2 * n_half + 1
    axis = (np.arange(n) - n_half) * h
    if d == 1:
        points = axis[:, None]
        multi = np.arange(n)[:, None]
    else:
        X1, X2 = np.meshgrid(axis, axis, indexing="ij")
        points = np.stack([X1.ravel(), X2.ravel()], axis=-1)
        I1, I2 = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        multi = np.stack([I1.ravel(), I2.ravel()], axis=-1)
    inner = np.all((multi >= 1) & (multi <= n - 2), axis=1)
    interior = np.flatnonzero(inner)
    boundary = np.flatnonzero(~inner)
    interior_pos = np.full(points.shape[0], -1, dtype=np.int64)
    interior_pos[interior] = np.arange(interior.size)

    strides = np.array([n, 1][-d:], dtype=np.int64)  # row-major flat strides
    mi = multi[interior]
    nb_plus = np.empty((interior.size, d), dtype=np.int64)
    nb_minus = np.empty((interior.size, d), dtype=np.int64)
    flat = mi @ strides
    for ax in range(d):
        nb_plus[:, ax] = flat + strides[ax]
        nb_minus[:, ax] = flat - strides[ax]
    nb_diag = None
    if d == 2:
        nb_diag = np.stack([
            flat + strides[0] + strides[1],
            flat - strides[0] - strides[1],
            flat + strides[0] - strides[1],
            flat - strides[0] + strides[1],
        ], axis=-1)

    origin_flat = int((np.array([n_half] * d) @ strides))
    return Grid(d=d, radius=n_half * h, h=h, shape=(n,) * d, points=points,
                interior=interior, boundary=boundary,
                origin_index=int(interior_pos[origin_flat]),
                interior_pos=interior_pos, nb_plus=nb_plus, nb_minus=nb_minus,
                nb_diag=nb_diag)


@dataclass
class StencilPlan:
    """Model data precomputed on a grid: pure-pair drift/cost tables and the
    per-point central-vs-upwind decision (uniform over action pairs so the
    stencil choice never depends on the strategies)."""

    grid: Grid
    a: np.ndarray          # (Ni, d, d)
    b_pairs: np.ndarray    # (m, n, Ni, d)
    c_pairs: np.ndarray    # (m, n, Ni)
    central: np.ndarray    # (Ni,) cell Peclet holds for every pure pair
    peclet_margin: float   # worst h |b_i| / a_ii over points, axes, pairs
    cross_dominant: np.ndarray | None  # (Ni,) |a12| <= min(a11, a22), d=2 only


def make_plan(model: GameModel, grid: Grid) -> StencilPlan:
    pts = grid.interior_points()
    ni, d = pts.shape
    a = np.asarray(model.a_matrix(pts), dtype=float).reshape(ni, d, d)
    if not np.all(np.isfinite(a)):
        raise ModelEvaluationError("diffusion is not finite on the grid")
    mineig = np.linalg.eigvalsh(a)[:, 0]
    if float(mineig.min()) < 1e-10:
        raise NondegeneracyError(
            f"diffusion matrix is numerically degenerate on the grid "
            f"(min eigenvalue {mineig.min():.3e})")

    m, n = model.n1, model.n2
    b_pairs = np.empty((m, n, ni, d))
    c_pairs = np.empty((m, n, ni))
    for i, j, u1, u2 in model.pure_pairs():
        b_pairs[i, j] = np.asarray(model.drift(pts, u1, u2), dtype=float).reshape(ni, d)
        c_pairs[i, j] = np.asarray(model.cost(pts, u1, u2), dtype=float).reshape(ni)
    if not (np.all(np.isfinite(b_pairs)) and np.all(np.isfinite(c_pairs))):
        raise ModelEvaluationError("drift or cost is not finite on the grid")
    if c_pairs.min() < -1e-12:
        raise ModelEvaluationError(f"negative running cost on the grid: {c_pairs.min():.3e}")

    bmax = np.abs(b_pairs).max(axis=(0, 1))            # (Ni, d)
    diag = np.einsum("kii->ki", a)                     # (Ni, d)
    ratio = grid.h * bmax / diag
    central = np.all(ratio <= 1.0 + 1e-12, axis=1)
    cross_dominant = None
    if d == 2:
        cross_dominant = np.abs(a[:, 0, 1]) <= np.minimum(diag[:, 0], diag[:, 1]) + 1e-14
    return StencilPlan(grid=grid, a=a, b_pairs=b_pairs, c_pairs=c_pairs,
                       central=central, peclet_margin=float(ratio.max()),
                       cross_dominant=cross_dominant)


@dataclass
class DiscreteOperator:
    """A sparse operator over interior nodes (generator plus zeroth-order cost)."""

    grid: Grid
    matrix: sp.csr_matrix
    monotone: bool          # all off-diagonal entries nonnegative
    peclet_margin: float
    upwind_fraction: float  # share of interior points on the upwind stencil


def _relaxed_tables(plan: StencilPlan, w1: np.ndarray, w2: np.ndarray):
    """Per-point relaxed drift (Ni, d) and cost (Ni,) under weight fields."""
    b = np.einsum("ki,kj,ijkd->kd", w1, w2, plan.b_pairs)
    c = np.einsum("ki,kj,ijk->k", w1, w2, plan.c_pairs)
    return b, c


def _check_fields(plan: StencilPlan, field1, field2):
    ni = plan.grid.n_interior
    w1 = np.asarray(field1.weights if hasattr(field1, "weights") else field1, dtype=float)
    w2 = np.asarray(field2.weights if hasattr(field2, "weights") else field2, dtype=float)
    m, n = plan.b_pairs.shape[:2]
    if w1.shape != (ni, m) or w2.shape != (ni, n):
        raise ConfigurationError(
            "strategy.weights",
            f"expected shapes ({ni},{m}) and ({ni},{n}), got {w1.shape} and {w2.shape}")
    return w1, w2


def assemble_fixed(model: GameModel, grid: Grid, field1, field2,
                   plan: StencilPlan | None = None) -> DiscreteOperator:
    """Assemble L^{v1,v2} + c^{v1,v2} for fixed stationary strategy fields.

    The stencil decision per point comes from the plan (all-pairs Peclet
    test), so the assembled rows agree exactly with `hamiltonian_matrix`
    under the same mixtures at bilinear points.
    """
    if plan is None:
        plan = make_plan(model, grid)
    w1, w2 = _check_fields(plan, field1, field2)
    bbar, cbar = _relaxed_tables(plan, w1, w2)
    ni, d = bbar.shape
    h = grid.h
    diag_a = np.einsum("kii->ki", plan.a)

    rows, cols, vals = [], [], []
    slots = np.arange(ni)
    center = cbar.copy()

    def add(col_flat: np.ndarray, coeff: np.ndarray):
        cslot = grid.interior_pos[col_flat]
        keep = (cslot >= 0) & (coeff != 0.0)
        rows.append(slots[keep])
        cols.append(cslot[keep])
        vals.append(coeff[keep])

    up = ~plan.central
    for ax in range(d):
        base = diag_a[:, ax] / (2 * h * h)
        bax = bbar[:, ax]
        cplus = base.copy()
        cminus = base.copy()
        cplus[plan.central] += bax[plan.central] / (2 * h)
        cminus[plan.central] -= bax[plan.central] / (2 * h)
        cplus[up] += np.maximum(bax[up], 0.0) / h
        cminus[up] += np.maximum(-bax[up], 0.0) / h
        center -= diag_a[:, ax] / (h * h)
        center[up] -= np.abs(bax[up]) / h
        add(grid.nb_plus[:, ax], cplus)
        add(grid.nb_minus[:, ax], cminus)

    monotone = True
    if d == 2:
        a12 = plan.a[:, 0, 1]
        dom = plan.cross_dominant
        nz = a12 != 0.0
        pos = nz & dom & (a12 > 0)
        neg = nz & dom & (a12 < 0)
        split = np.zeros(ni)
        split[pos | neg] = np.abs(a12[pos | neg]) / (2 * h * h)
        # dominant splitting: mass on one diagonal pair, removed from axes
        for flats, mask in ((grid.nb_diag[:, 0], pos), (grid.nb_diag[:, 1], pos),
                            (grid.nb_diag[:, 2], neg), (grid.nb_diag[:, 3], neg)):
            coeff = np.where(mask, split, 0.0)
            add(flats, coeff)
        axis_corr = -np.where(pos | neg, split, 0.0)
        for ax in range(2):
            add(grid.nb_plus[:, ax], axis_corr)
            add(grid.nb_minus[:, ax], axis_corr)
        center += np.where(pos | neg, np.abs(a12) / (h * h), 0.0)
        # non-dominant: plain central cross stencil, monotonicity lost
        rest = nz & ~dom
        if rest.any():
            monotone = False
            quarter = np.where(rest, a12 / (4 * h * h), 0.0)
            add(grid.nb_diag[:, 0], quarter)
            add(grid.nb_diag[:, 1], quarter)
            add(grid.nb_diag[:, 2], -quarter)
            add(grid.nb_diag[:, 3], -quarter)

    rows.append(slots)
    cols.append(slots)
    vals.append(center)
    A = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(ni, ni)).tocsr()

    if monotone:
        off = A.copy()
        off.setdiag(0.0)
        if off.nnz and off.data.min() < -1e-14:
            monotone = False
    return DiscreteOperator(grid=grid, matrix=A, monotone=monotone,
                            peclet_margin=plan.peclet_margin,
                            upwind_fraction=float(np.mean(up)))


def _value_stencil(plan: StencilPlan, value_field: np.ndarray):
    """Difference quotients of an interior value field (boundary zeros)."""
    grid = plan.grid
    ni, d = grid.n_interior, grid.d
    V = np.asarray(value_field, dtype=float)
    if V.shape != (ni,):
        raise ConfigurationError("valueField", f"expected shape ({ni},), got {V.shape}")
    Vf = np.zeros(grid.points.shape[0])
    Vf[grid.interior] = V
    h = grid.h
    Vp = np.stack([Vf[grid.nb_plus[:, ax]] for ax in range(d)], axis=-1)
    Vm = np.stack([Vf[grid.nb_minus[:, ax]] for ax in range(d)], axis=-1)
    D2 = (Vp - 2 * V[:, None] + Vm) / (h * h)
    D1c = (Vp - Vm) / (2 * h)
    D1f = (Vp - V[:, None]) / h
    D1b = (V[:, None] - Vm) / h

    diag_a = np.einsum("kii->ki", plan.a)
    diff = 0.5 * np.einsum("ki,ki->k", diag_a, D2)
    if d == 2:
        a12 = plan.a[:, 0, 1]
        Vpp = Vf[grid.nb_diag[:, 0]]
        Vmm = Vf[grid.nb_diag[:, 1]]
        Vpm = Vf[grid.nb_diag[:, 2]]
        Vmp = Vf[grid.nb_diag[:, 3]]
        dom = plan.cross_dominant
        split_pos = (Vpp + Vmm + 2 * V - Vp[:, 0] - Vm[:, 0] - Vp[:, 1] - Vm[:, 1]) / (2 * h * h)
        split_neg = (-(Vpm + Vmp + 2 * V) + Vp[:, 0] + Vm[:, 0] + Vp[:, 1] + Vm[:, 1]) / (2 * h * h)
        central_cross = (Vpp - Vpm - Vmp + Vmm) / (4 * h * h)
        cross = np.where(dom, np.where(a12 >= 0, split_pos, split_neg), central_cross)
        diff = diff + a12 * cross
    return diff, D1c, D1f, D1b


def hamiltonian_tensor(plan: StencilPlan, value_field: np.ndarray):
    """Per-point payoff tensor (Ni, m, n) for the local action games.

    Entry [k, i, j] applies the discretised generator under pure actions
    (u1_i, u2_j), plus cost times the local value, to the value field at
    interior point k.  At points passing the all-pairs Peclet test the drift
    difference is central and the tensor is exactly bilinear under mixing;
    elsewhere it is upwinded per pure pair (flagged by `central`).
    """
    grid = plan.grid
    V = np.asarray(value_field, dtype=float)
    diff, D1c, D1f, D1b = _value_stencil(plan, V)
    b = plan.b_pairs
    central = plan.central
    drift_c = np.einsum("ijkd,kd->ijk", b, D1c)
    bp = np.maximum(b, 0.0)
    bm = np.minimum(b, 0.0)
    drift_u = np.einsum("ijkd,kd->ijk", bp, D1f) + np.einsum("ijkd,kd->ijk", bm, D1b)
    drift = np.where(central[None, None, :], drift_c, drift_u)
    H = diff[None, None, :] + drift + plan.c_pairs * V[None, None, :]
    return np.moveaxis(H, 2, 0), central  # (Ni, m, n)


def hamiltonian_matrix(model: GameModel, grid: Grid, point: int,
                       value_field: np.ndarray,
                       plan: StencilPlan | None = None) -> MatrixGame:
    """The local action game at one interior point for a given value field."""
    if plan is None:
        plan = make_plan(model, grid)
    if not (0 <= point < grid.n_interior):
        raise ConfigurationError("point", f"interior slot {point} out of range")
    H, central = hamiltonian_tensor(plan, value_field)
    return MatrixGame(payoff=H[point], bilinear=bool(central[point]))


def nearest_interior(grid: Grid, x: np.ndarray):
    """Nearest interior slot for arbitrary points; reports which were clamped."""
    x = np.asarray(x, dtype=float)
    n = grid.shape[0]
    idx = np.rint((x + grid.radius) / grid.h).astype(np.int64)
    clamped = np.any((idx < 1) | (idx > n - 2), axis=-1)
    idx = np.clip(idx, 1, n - 2)
    strides = np.array([n, 1][-grid.d:], dtype=np.int64)
    flat = idx @ strides
    return grid.interior_pos[flat], clamped


def transfer_value(old_grid: Grid, values: np.ndarray, new_grid: Grid) -> np.ndarray:
    """Carry an interior value field to another grid (warm starts).

    Linear interpolation inside the old box, clamped to the nearest old
    interior value outside it.
    """
    values = np.asarray(values, dtype=float)
    new_pts = new_grid.interior_points()
    if old_grid.d == 1:
        xo = old_grid.interior_points()[:, 0]
        return np.interp(new_pts[:, 0], xo, values)
    from scipy.interpolate import RegularGridInterpolator

    n = old_grid.shape[0]
    axis = (np.arange(n) - (n - 1) // 2) * old_grid.h
    full = np.zeros(old_grid.points.shape[0])
    full[old_grid.interior] = values
    interp = RegularGridInterpolator((axis, axis), full.reshape(n, n),
                                     bounds_error=False, fill_value=None)
    lim = old_grid.radius - old_grid.h
    clipped = np.clip(new_pts, -lim, lim)
    return np.asarray(interp(clipped), dtype=float)
