"""Brute-force ground truth on tiny grids.

For a frozen pair of stationary strategy fields the risk-sensitive cost is
the principal eigenvalue of the corresponding linear operator, so scanning
eigenvalues over strategy fields scans the game's payoff landscape.  On a
grid with a handful of interior nodes every pure strategy field, and every
field on a per-point probability mesh, can be enumerated outright; the
resulting max-min / min-max bracket certifies the policy-iteration answer.

The bracket is sound but not tight: the true saddle may sit between mesh
points, so certification carries a slack term estimated from observed
eigenvalue differences across neighboring mesh fields.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass

import numpy as np

from .discretize import Grid, assemble_fixed, make_plan
from .eigen import principal_eigenpair
from .errors import BudgetExceededError, ConfigurationError, StructureError
from .isaacs import IsaacsSolve, StrategyField
from .model import GameModel

__all__ = [
    "OracleResult",
    "CertifyReport",
    "enumerate_strategies",
    "certify",
    "pure_field",
    "export_tensor",
]

MAX_INTERIOR = 5
MAX_ACTIONS = 3
MAX_MESH_STEPS = 6
MAX_PAIRS = 1_000_000


@dataclass
class OracleResult:
    """Exhaustive eigenvalue scan over strategy-field pairs on one grid."""

    grid: Grid
    mesh_steps: int
    pure_tensor: np.ndarray            # (#pure fields 1, #pure fields 2)
    pure_assignments1: list[tuple]     # action index per interior node
    pure_assignments2: list[tuple]
    pure_max_min: float
    pure_min_max: float
    mesh_tensor: np.ndarray            # (#mesh fields 1, #mesh fields 2)
    mesh_options: list[tuple]          # weight vectors forming the per-point mesh (player 1)
    mesh_options2: list[tuple]
    mesh_max_min: float
    mesh_min_max: float
    slack_estimate: float              # half mesh step per point, Lipschitz from the tensor
    n_eigensolves: int


@dataclass
class CertifyReport:
    passed: bool
    lambda_: float
    lower: float
    upper: float
    slack: float
    note: str = ""


def _mesh_options(n_actions: int, steps: int) -> list[tuple]:
    """All weight vectors with coordinates on {0, 1/steps, ..., 1}."""
    if n_actions == 1:
        return [(1.0,)]
    out = []
    for parts in itertools.product(range(steps + 1), repeat=n_actions - 1):
        if sum(parts) <= steps:
            rest = steps - sum(parts)
            out.append(tuple(p / steps for p in parts) + (rest / steps,))
    return out


def _field_iter(options: list[tuple], ni: int):
    for combo in itertools.product(range(len(options)), repeat=ni):
        yield combo, np.array([options[c] for c in combo])


def enumerate_strategies(model: GameModel, tiny_grid: Grid,
                         mesh_steps: int) -> OracleResult:
    """Eigenvalue tensors over all pure and mesh strategy-field pairs.

    Refuses combinatorial blowups up front: at most 5 interior nodes,
    3 actions per player, mesh steps at most 6, and at most 1e6 pairs.
    """
    ni = tiny_grid.n_interior
    if ni > MAX_INTERIOR:
        raise BudgetExceededError(
            f"{ni} interior nodes exceed the enumeration limit of {MAX_INTERIOR}")
    if model.n1 > MAX_ACTIONS or model.n2 > MAX_ACTIONS:
        raise BudgetExceededError(
            f"action sets of sizes {model.n1}, {model.n2} exceed the limit of {MAX_ACTIONS}")
    if not (1 <= mesh_steps <= MAX_MESH_STEPS):
        raise ConfigurationError(
            "oracle.meshSteps", f"mesh steps must be in [1, {MAX_MESH_STEPS}]")
    opts1 = _mesh_options(model.n1, mesh_steps)
    opts2 = _mesh_options(model.n2, mesh_steps)
    m1 = len(opts1) ** ni
    m2 = len(opts2) ** ni
    if m1 * m2 > MAX_PAIRS:
        raise BudgetExceededError(
            f"mesh enumeration needs {m1} x {m2} = {m1 * m2} eigensolves, over {MAX_PAIRS}")

    plan = make_plan(model, tiny_grid)
    solves = 0

    def lam(w1: np.ndarray, w2: np.ndarray) -> float:
        nonlocal solves
        op = assemble_fixed(model, tiny_grid, w1, w2, plan)
        solves += 1
        return principal_eigenpair(op, tol=1e-12, max_iter=2000,
                                   normalize_index=tiny_grid.origin_index).lambda_

    mesh = np.empty((m1, m2))
    fields1 = [(combo, w) for combo, w in _field_iter(opts1, ni)]
    fields2 = [(combo, w) for combo, w in _field_iter(opts2, ni)]
    for a, (_, w1) in enumerate(fields1):
        for b, (_, w2) in enumerate(fields2):
            mesh[a, b] = lam(w1, w2)

    # pure point masses sit at mesh extremes, so their tensor is a slice of
    # the mesh tensor rather than a fresh round of eigensolves
    def point_mass_index(opts: list[tuple], action: int) -> int:
        target = tuple(1.0 if t == action else 0.0 for t in range(len(opts[0])))
        return opts.index(target)

    pm1 = [point_mass_index(opts1, a) for a in range(model.n1)]
    pm2 = [point_mass_index(opts2, a) for a in range(model.n2)]
    pure1 = list(itertools.product(range(model.n1), repeat=ni))
    pure2 = list(itertools.product(range(model.n2), repeat=ni))

    def combo_flat(combo: tuple, n_opts: int) -> int:
        flat = 0
        for c in combo:
            flat = flat * n_opts + c
        return flat

    rows = [combo_flat(tuple(pm1[a] for a in asg), len(opts1)) for asg in pure1]
    cols = [combo_flat(tuple(pm2[a] for a in asg), len(opts2)) for asg in pure2]
    pure = mesh[np.ix_(rows, cols)].copy()

    pure_max_min = float(pure.min(axis=0).max())
    pure_min_max = float(pure.max(axis=1).min())
    mesh_max_min = float(mesh.min(axis=0).max())
    mesh_min_max = float(mesh.max(axis=1).min())
    tol = 1e-8
    if not (pure_max_min <= mesh_max_min + tol
            and mesh_max_min <= mesh_min_max + tol
            and mesh_min_max <= pure_min_max + tol):
        raise StructureError(
            "enumeration sandwich violated: "
            f"{pure_max_min} / {mesh_max_min} / {mesh_min_max} / {pure_min_max}")

    # per-point Lipschitz step from adjacent mesh fields, half a step per node
    shaped = mesh.reshape((len(opts1),) * ni + (m2,))
    step = 0.0
    for ax in range(ni):
        if shaped.shape[ax] > 1:
            step = max(step, float(np.abs(np.diff(shaped, axis=ax)).max()))
    shaped2 = mesh.reshape((m1,) + (len(opts2),) * ni)
    for ax in range(1, ni + 1):
        if shaped2.shape[ax] > 1:
            step = max(step, float(np.abs(np.diff(shaped2, axis=ax)).max()))
    slack_estimate = 0.5 * ni * step

    return OracleResult(
        grid=tiny_grid, mesh_steps=mesh_steps, pure_tensor=pure,
        pure_assignments1=pure1, pure_assignments2=pure2,
        pure_max_min=pure_max_min, pure_min_max=pure_min_max,
        mesh_tensor=mesh, mesh_options=opts1, mesh_options2=opts2,
        mesh_max_min=mesh_max_min, mesh_min_max=mesh_min_max,
        slack_estimate=slack_estimate, n_eigensolves=solves)


def certify(solve: IsaacsSolve, oracle: OracleResult,
            slack: float | None = None) -> CertifyReport:
    """Check that a solve's eigenvalue lies in the oracle bracket."""
    g1, g2 = solve.grid, oracle.grid
    if (g1.d, g1.h, g1.radius, g1.shape) != (g2.d, g2.h, g2.radius, g2.shape):
        raise ConfigurationError(
            "oracle.grid", "solve and oracle must use the same grid")
    if slack is None:
        slack = oracle.slack_estimate
    lam = solve.lambda_
    lo = oracle.mesh_max_min - slack
    hi = oracle.mesh_min_max + slack
    passed = lo <= lam <= hi
    note = "" if passed else (
        f"eigenvalue {lam:.10g} outside [{lo:.10g}, {hi:.10g}]")
    return CertifyReport(passed=passed, lambda_=lam, lower=oracle.mesh_max_min,
                         upper=oracle.mesh_min_max, slack=float(slack), note=note)


def pure_field(model: GameModel, oracle: OracleResult, player: int,
               index: int) -> StrategyField:
    """Materialize one enumerated pure strategy field on the oracle grid."""
    if player == 1:
        assignments, actions = oracle.pure_assignments1, model.actions1
    elif player == 2:
        assignments, actions = oracle.pure_assignments2, model.actions2
    else:
        raise ConfigurationError("oracle.player", f"player must be 1 or 2, got {player}")
    asg = np.asarray(assignments[index], dtype=int)
    return StrategyField.from_indices(oracle.grid, actions, asg)


def export_tensor(oracle: OracleResult, path: str) -> None:
    """Write both tensors as CSV: kind, indices, field encodings, eigenvalue."""

    def encode_pure(asg) -> str:
        return "|".join(str(a) for a in asg)

    def encode_mesh(combo, options) -> str:
        return "|".join("/".join(f"{w:.6g}" for w in options[c]) for c in combo)

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["kind", "row", "col", "field1", "field2", "lambda"])
        for a, asg1 in enumerate(oracle.pure_assignments1):
            for b, asg2 in enumerate(oracle.pure_assignments2):
                w.writerow(["pure", a, b, encode_pure(asg1), encode_pure(asg2),
                            f"{oracle.pure_tensor[a, b]:.17g}"])
        ni = oracle.grid.n_interior
        combos1 = list(itertools.product(range(len(oracle.mesh_options)), repeat=ni))
        combos2 = list(itertools.product(range(len(oracle.mesh_options2)), repeat=ni))
        for a, c1 in enumerate(combos1):
            for b, c2 in enumerate(combos2):
                w.writerow(["mesh", a, b,
                            encode_mesh(c1, oracle.mesh_options),
                            encode_mesh(c2, oracle.mesh_options2),
                            f"{oracle.mesh_tensor[a, b]:.17g}"])
