"""Dirichlet Isaacs eigenproblems by policy iteration over local games.

On a fixed box the solver alternates: build the per-point action games from
the current value field, pick (mixed) selectors by solving each game, freeze
them, and recompute the principal eigenpair of the resulting linear
operator.  At a fixed point the triple (V, lambda, v1, v2) satisfies the
discrete Isaacs equation: the per-point game value equals lambda * V.

Growing the box radius gives a nondecreasing eigenvalue sequence whose
limit is the game value; `radius_sweep` runs that loop with warm starts and
a geometric-decay extrapolation of the tail.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .discretize import (
    Grid,
    StencilPlan,
    assemble_fixed,
    build_grid,
    hamiltonian_tensor,
    make_plan,
    nearest_interior,
    transfer_value,
)
from .eigen import EigenPair, principal_eigenpair
from .errors import ConfigurationError, ConvergenceError
from .matrixgame import MatrixGame, solve_game
from .model import ActionSet, GameModel, MixedAction

__all__ = [
    "StrategyField",
    "IsaacsSolve",
    "SweepReport",
    "CostPerturbation",
    "dirichlet_isaacs",
    "radius_sweep",
    "extract_saddle",
    "solve_single_player",
]


@dataclass(frozen=True)
class StrategyField:
    """One player's stationary Markov strategy sampled at interior nodes."""

    grid: Grid
    actions: ActionSet
    weights: np.ndarray  # (n_interior, n_actions), rows on the simplex

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 2 or w.shape != (self.grid.n_interior, len(self.actions)):
            raise ConfigurationError(
                "strategy.weights",
                f"expected ({self.grid.n_interior}, {len(self.actions)}), got {w.shape}")
        if not np.all(np.isfinite(w)) or w.min() < -1e-9:
            raise ConfigurationError("strategy.weights", "weights must be finite and nonnegative")
        w = np.maximum(w, 0.0)
        sums = w.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > 1e-6):
            raise ConfigurationError("strategy.weights", "rows must sum to one")
        object.__setattr__(self, "weights", w / sums[:, None])

    @property
    def n_points(self) -> int:
        return self.weights.shape[0]

    def mixed(self, k: int) -> MixedAction:
        return MixedAction(actions=self.actions, weights=tuple(self.weights[k]))

    def extended(self, fine_grid: Grid) -> "StrategyField":
        """Resample onto another grid by nearest-node lookup."""
        slots, _ = nearest_interior(self.grid, fine_grid.interior_points())
        return StrategyField(grid=fine_grid, actions=self.actions,
                             weights=self.weights[slots])

    @staticmethod
    def constant(grid: Grid, actions: ActionSet, index: int) -> "StrategyField":
        w = np.zeros((grid.n_interior, len(actions)))
        w[:, index] = 1.0
        return StrategyField(grid=grid, actions=actions, weights=w)

    @staticmethod
    def from_indices(grid: Grid, actions: ActionSet, indices: np.ndarray) -> "StrategyField":
        indices = np.asarray(indices, dtype=int)
        w = np.zeros((indices.size, len(actions)))
        w[np.arange(indices.size), indices] = 1.0
        return StrategyField(grid=grid, actions=actions, weights=w)


@dataclass
class IsaacsSolve:
    """Converged (or diagnosed) policy-iteration state on one box."""

    grid: Grid
    eigen: EigenPair
    v1: StrategyField
    v2: StrategyField
    iterations: int
    selector_changes: list[int]
    hamiltonian_residual: float   # max |game value - lambda*V|, plus any pure-game gap
    converged: bool
    lambdas: list[float]          # eigenvalue after each outer iteration
    damping_events: int
    monotone: bool
    peclet_margin: float
    upwind_fraction: float
    perturbation_trace: list[tuple[float, float]] | None = None

    @property
    def lambda_(self) -> float:
        return self.eigen.lambda_


@dataclass
class SweepReport:
    """Eigenvalues across growing boxes and the extrapolated limit."""

    radii: list[float]
    lambdas: list[float]
    converged: bool
    extrapolated: float
    final: IsaacsSolve
    solves: list[IsaacsSolve]
    warnings: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class CostPerturbation:
    """Schedule of cost modifications r_m >= r decreasing back to r.

    kind "bounded": r_m = zeta_m r + (1 - zeta_m)(sup r + delta) with
    zeta_m a cut-off equal to 1 inside the ball of radius m and 0 outside
    radius m+1.  kind "unbounded": r_m = r + ell/m for an inf-compact ell.
    """

    kind: str
    delta: float = 0.1
    levels: tuple[float, ...] = (1.0, 2.0, 4.0, 8.0)
    ell: object | None = None

    def __post_init__(self):
        if self.kind not in ("bounded", "unbounded"):
            raise ConfigurationError("perturbation.kind", f"unknown kind {self.kind!r}")
        if self.kind == "unbounded" and self.ell is None:
            raise ConfigurationError("perturbation.ell", "unbounded kind needs ell")
        if not all(m > 0 for m in self.levels):
            raise ConfigurationError("perturbation.levels", "levels must be positive")

    def apply(self, plan: StencilPlan, level: float) -> np.ndarray:
        pts = plan.grid.interior_points()
        c = plan.c_pairs
        if self.kind == "bounded":
            zeta = np.clip(level + 1.0 - np.linalg.norm(pts, axis=1), 0.0, 1.0)
            top = float(c.max()) + self.delta
            return zeta[None, None, :] * c + (1.0 - zeta[None, None, :]) * top
        bump = np.asarray(self.ell(pts), dtype=float).reshape(-1) / level
        if bump.min() < 0:
            raise ConfigurationError("perturbation.ell", "ell must be nonnegative")
        return c + bump[None, None, :]


def _solve_point_games(H: np.ndarray, central: np.ndarray):
    """Per-point saddle data: weights, values, duality gaps.

    Pure saddles are found vectorized (first in row-major order, matching
    the game solver's tie-breaking).  Remaining bilinear points get a full
    mixed solve; remaining upwinded points are scored over pure actions
    only and carry their max-min/min-max gap.
    """
    ni, m, n = H.shape
    w1 = np.zeros((ni, m))
    w2 = np.zeros((ni, n))
    vals = np.empty(ni)
    gaps = np.zeros(ni)

    colmin = H.min(axis=1, keepdims=True)
    rowmax = H.max(axis=2, keepdims=True)
    saddle = (H <= colmin) & (H >= rowmax)
    has = saddle.any(axis=(1, 2))
    first = saddle.reshape(ni, m * n).argmax(axis=1)
    ii, jj = np.divmod(first, n)
    ks = np.flatnonzero(has)
    w1[ks, ii[ks]] = 1.0
    w2[ks, jj[ks]] = 1.0
    vals[ks] = H[ks, ii[ks], jj[ks]]

    for k in np.flatnonzero(~has):
        if central[k]:
            sol = solve_game(MatrixGame(payoff=H[k]))
            w1[k], w2[k] = sol.p, sol.q
            vals[k], gaps[k] = sol.value, sol.gap
        else:
            lower = H[k].min(axis=0)          # player 2's guaranteed floor
            upper = H[k].max(axis=1)          # player 1's guaranteed ceiling
            j = int(lower.argmax())
            i = int(upper.argmin())
            w1[k, i] = 1.0
            w2[k, j] = 1.0
            vals[k] = 0.5 * (lower[j] + upper[i])
            gaps[k] = float(upper[i] - lower[j])
    return w1, w2, vals, gaps


def _changed_points(prev1, prev2, w1, w2, tol: float) -> int:
    if prev1 is None:
        return w1.shape[0]
    tv1 = 0.5 * np.abs(w1 - prev1).sum(axis=1)
    tv2 = 0.5 * np.abs(w2 - prev2).sum(axis=1)
    return int(np.count_nonzero((tv1 > tol) | (tv2 > tol)))


def _init_value(grid: Grid, v0) -> np.ndarray:
    if v0 is None:
        V = np.ones(grid.n_interior)
    else:
        V = np.asarray(v0, dtype=float)
        if V.shape != (grid.n_interior,):
            raise ConfigurationError(
                "solver.v0", f"expected shape ({grid.n_interior},), got {V.shape}")
        if not np.all(np.isfinite(V)) or V.min() <= 0:
            raise ConfigurationError("solver.v0", "initial value field must be positive")
    return V / V[grid.origin_index]


def _iterate(model: GameModel, grid: Grid, plan: StencilPlan, selector_step,
             tol: float, max_outer: int, v0, damping: float = 0.5) -> IsaacsSolve:
    """Shared policy-iteration loop; `selector_step` maps the local game
    tensor to (w1, w2, values, gaps)."""
    if not (0.0 < damping < 1.0):
        raise ConfigurationError("solver.damping", f"damping must be in (0, 1), got {damping}")
    # the Collatz-Wielandt envelope bottoms out near eps times the operator
    # scale (diagonal ~ tr(a)/h^2), so the inner tolerance must track it
    scale = float(np.max(np.abs(np.trace(plan.a, axis1=1, axis2=2))))
    floor = 64.0 * np.finfo(float).eps * (1.0 + scale / grid.h**2)
    etol = max(floor, 0.01 * tol)
    V = _init_value(grid, v0)
    prev1 = prev2 = None
    eig = None
    lambdas: list[float] = []
    changes_log: list[int] = []
    damping_events = 0
    converged = False
    vals = gaps = None
    iterations = 0

    for _ in range(max_outer):
        H, central = hamiltonian_tensor(plan, V)
        w1, w2, vals, gaps = selector_step(H, central)
        changes = _changed_points(prev1, prev2, w1, w2, tol)
        changes_log.append(changes)
        if changes == 0 and eig is not None:
            # identical fields reproduce the same operator: already consistent
            converged = True
            prev1, prev2 = w1, w2
            break
        prev1, prev2 = w1, w2
        op = assemble_fixed(model, grid, w1, w2, plan)
        new_eig = principal_eigenpair(op, tol=etol, max_iter=800,
                                      normalize_index=grid.origin_index)
        iterations += 1
        lam = new_eig.lambda_
        # revisiting an earlier eigenvalue while selectors still move marks a cycle
        cycling = (len(lambdas) >= 2 and changes > 0
                   and any(abs(lam - old) <= 1e-12 * max(1.0, abs(lam))
                           for old in lambdas[:-1]))
        lambdas.append(lam)
        Vnew = new_eig.phi
        eig = new_eig
        if cycling:
            damping_events += 1
            V = damping * V + (1.0 - damping) * Vnew
            V = V / V[grid.origin_index]
        else:
            V = Vnew

    if eig is None:
        raise ConvergenceError("policy iteration made no eigen solves", iterations=0)
    resid = float(np.max(np.abs(vals - eig.lambda_ * eig.phi) + gaps))
    if not converged:
        raise ConvergenceError(
            f"policy iteration did not stabilize in {max_outer} outer iterations "
            f"(last lambda {eig.lambda_:.12g}, last selector changes "
            f"{changes_log[-1]}, damping events {damping_events})",
            value=eig.lambda_, lower=eig.cw_lower, upper=eig.cw_upper,
            residual=resid, iterations=iterations)
    return IsaacsSolve(
        grid=grid, eigen=eig,
        v1=StrategyField(grid=grid, actions=model.actions1, weights=prev1),
        v2=StrategyField(grid=grid, actions=model.actions2, weights=prev2),
        iterations=iterations, selector_changes=changes_log,
        hamiltonian_residual=resid, converged=True, lambdas=lambdas,
        damping_events=damping_events, monotone=bool(np.all(plan.central)),
        peclet_margin=plan.peclet_margin,
        upwind_fraction=float(np.mean(~plan.central)))


def dirichlet_isaacs(model: GameModel, grid: Grid, tol: float = 1e-9,
                     max_outer: int = 80, plan: StencilPlan | None = None,
                     v0: np.ndarray | None = None,
                     damping: float = 0.5) -> IsaacsSolve:
    """Solve the Dirichlet Isaacs eigenproblem on one box.

    Policy iteration: per-point games from the current value field pick the
    two selector fields, the frozen-field operator is assembled, and its
    principal eigenpair refreshes (lambda, V).  Convergence requires both a
    stable eigenvalue (|delta lambda| <= tol) and stable selector fields
    (per-point total variation <= tol).  A detected eigenvalue cycle
    triggers value-field averaging with damping 1/2.
    """
    if plan is None:
        plan = make_plan(model, grid)
    return _iterate(model, grid, plan, _solve_point_games, tol, max_outer, v0,
                    damping=damping)


def extract_saddle(solve: IsaacsSolve) -> tuple[StrategyField, StrategyField]:
    """The saddle strategy fields of a converged solve."""
    if not solve.converged:
        raise ConvergenceError("cannot extract strategies from an unconverged solve")
    return solve.v1, solve.v2


def radius_sweep(model: GameModel, radii, h: float, tol: float = 1e-9,
                 max_outer: int = 80, warm_start: bool = True,
                 damping: float = 0.5) -> SweepReport:
    """Solve on growing boxes; report the eigenvalue trend and its limit.

    Eigenvalues are nondecreasing in the radius up to discretization error;
    violations beyond 1e-10 are reported as warnings advising a finer h,
    not errors.  The extrapolated limit fits a geometric ratio to the last
    increments (raw last eigenvalue when the tail is not geometric).
    """
    radii = [float(r) for r in radii]
    if len(radii) == 0:
        raise ConfigurationError("grid.radiusList", "need at least one radius")
    if any(r2 <= r1 for r1, r2 in zip(radii, radii[1:])):
        raise ConfigurationError("grid.radiusList", "radii must be strictly increasing")

    solves: list[IsaacsSolve] = []
    lambdas: list[float] = []
    warns: list[str] = []
    prev_grid = None
    prev_V = None
    for r in radii:
        grid = build_grid(model.d, r, h)
        v0 = None
        if warm_start and prev_grid is not None:
            v0 = np.maximum(transfer_value(prev_grid, prev_V, grid), 1e-12)
        solve = dirichlet_isaacs(model, grid, tol=tol, max_outer=max_outer, v0=v0,
                                 damping=damping)
        solves.append(solve)
        lambdas.append(solve.lambda_)
        if len(lambdas) >= 2 and lambdas[-1] < lambdas[-2] - 1e-10:
            warns.append(
                f"radius {r:g}: eigenvalue decreased by {lambdas[-2] - lambdas[-1]:.3e}; "
                f"h={h:g} may be too coarse, refine the spacing")
        prev_grid, prev_V = grid, solve.eigen.phi

    extrapolated = lambdas[-1]
    tail = np.inf
    inc = np.diff(lambdas)
    if inc.size >= 1:
        tail = abs(inc[-1])
    if inc.size >= 2:
        d_last = inc[-1]
        rho = np.nan
        if inc.size >= 3 and inc[-3] > 0 and d_last > 0:
            rho = float(np.sqrt(d_last / inc[-3]))
        elif inc[-2] > 0 and d_last > 0:
            rho = float(d_last / inc[-2])
        if np.isfinite(rho) and 0.0 < rho < 0.999:
            correction = d_last * rho / (1.0 - rho)
            extrapolated = float(lambdas[-1] + correction)
            tail = abs(correction)
    # converged means the eigenvalue trend has stabilized in the radius, a
    # weaker and separate statement from each solve's own tolerance
    converged = (all(s.converged for s in solves)
                 and tail <= 1e-4 * max(1.0, abs(lambdas[-1])))
    return SweepReport(radii=radii, lambdas=lambdas, converged=converged,
                       extrapolated=extrapolated, final=solves[-1],
                       solves=solves, warnings=warns)


def _frozen_field(model: GameModel, grid: Grid, mode: str,
                  frozen: StrategyField | None) -> StrategyField:
    if mode == "maximize":
        actions, who = model.actions1, "player 1"
    else:
        actions, who = model.actions2, "player 2"
    if frozen is not None:
        if frozen.weights.shape != (grid.n_interior, len(actions)):
            raise ConfigurationError(
                "mode.frozen",
                f"frozen field shape {frozen.weights.shape} does not match "
                f"({grid.n_interior}, {len(actions)})")
        return frozen
    if len(actions) != 1:
        raise ConfigurationError(
            "mode.frozen", f"{who} has {len(actions)} actions; supply a frozen field")
    return StrategyField.constant(grid, actions, 0)


def solve_single_player(model: GameModel, grid: Grid, mode: str,
                        frozen: StrategyField | None = None,
                        perturbation: CostPerturbation | None = None,
                        tol: float = 1e-9, max_outer: int = 80,
                        plan: StencilPlan | None = None) -> IsaacsSolve:
    """Optimize one player with the other frozen (or trivial).

    mode "maximize" optimizes player 2 (cost maximizer) with player 1 held
    at `frozen`; "minimize" is symmetric.  With a perturbation schedule the
    cost is rebuilt as r_m per level and re-solved, and the returned solve
    carries the (level, lambda_m) trace alongside the unperturbed answer.
    """
    if mode not in ("maximize", "minimize"):
        raise ConfigurationError("mode", f"mode must be maximize or minimize, got {mode!r}")
    if plan is None:
        plan = make_plan(model, grid)
    fixed = _frozen_field(model, grid, mode, frozen)
    wf = fixed.weights

    def pick_best(heff):
        # where the frozen opponent mixes, actions become payoff-equivalent
        # and a bare argmax flips on eigensolve noise; take the first action
        # inside a noise band of the optimum so the selection is stable
        top = heff.max(axis=1, keepdims=True)
        band = 1e-9 * (1.0 + np.abs(top))
        return np.asarray(heff >= top - band).argmax(axis=1)

    def step(H, central):
        del central  # a one-sided optimum never needs mixing
        ni = H.shape[0]
        if mode == "maximize":
            heff = np.einsum("kij,ki->kj", H, wf)
            js = pick_best(heff)
            vals = heff[np.arange(ni), js]
            w2 = np.zeros_like(heff)
            w2[np.arange(ni), js] = 1.0
            return wf.copy(), w2, vals, np.zeros(ni)
        heff = np.einsum("kij,kj->ki", H, wf)
        is_ = pick_best(-heff)
        vals = heff[np.arange(ni), is_]
        w1 = np.zeros_like(heff)
        w1[np.arange(ni), is_] = 1.0
        return w1, wf.copy(), vals, np.zeros(ni)

    base = _iterate(model, grid, plan, step, tol, max_outer, None)
    if perturbation is not None:
        trace: list[tuple[float, float]] = []
        for level in perturbation.levels:
            pplan = StencilPlan(grid=plan.grid, a=plan.a, b_pairs=plan.b_pairs,
                                c_pairs=perturbation.apply(plan, level),
                                central=plan.central,
                                peclet_margin=plan.peclet_margin,
                                cross_dominant=plan.cross_dominant)
            lifted = _iterate(model, grid, pplan, step, tol, max_outer,
                              base.eigen.phi)
            trace.append((float(level), lifted.lambda_))
        base.perturbation_trace = trace
    return base
