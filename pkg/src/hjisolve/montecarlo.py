"""Monte Carlo verification of solver output.

Paths follow Euler-Maruyama under relaxed controls: each player's mixture
is looked up at the interior node nearest the current state, and drift and
cost are the mixture-weighted averages of the pure-pair coefficients at the
continuous state.  The risk-sensitive value is the log of the path-average
exponential of the accumulated cost, scaled by the horizon; all averaging
runs through log-sum-exp because the raw exponentials overflow at moderate
horizons.

Determinism: paths are split into fixed-size batches and batch b draws from
its own Philox stream keyed by (seed, b); reductions run in batch order.
The estimate is therefore bit-identical for any worker count.
"""

from __future__ import annotations

import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .discretize import nearest_interior
from .errors import ConfigurationError, EstimationError
from .isaacs import StrategyField
from .model import GameModel

__all__ = [
    "SimConfig",
    "PathEnsemble",
    "RiskEstimate",
    "GrowthEstimate",
    "DeviationOutcome",
    "VerifyReport",
    "RepresentationReport",
    "simulate_paths",
    "estimate_risk_sensitive",
    "estimate_growth_rate",
    "late_window",
    "estimate_horizon_trend",
    "make_deviations",
    "verify_saddle",
    "check_representation",
]

_BATCH = 25_000  # paths per random substream; fixed so results never depend on workers


@dataclass(frozen=True)
class SimConfig:
    """Simulation parameters for one ensemble."""

    x0: tuple
    T: float = 20.0
    dt: float = 1e-3
    paths: int = 100_000
    seed: int = 7

    def __post_init__(self):
        object.__setattr__(self, "x0",
                           tuple(float(v) for v in np.atleast_1d(np.asarray(self.x0, float))))
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise ConfigurationError("mc.dt", f"dt must be positive, got {self.dt}")
        if not (np.isfinite(self.T) and self.T >= 10 * self.dt):
            raise ConfigurationError("mc.T", f"horizon {self.T} must be at least 10*dt")
        if int(self.paths) < 100:
            raise ConfigurationError("mc.paths", f"need at least 100 paths, got {self.paths}")
        if not (0 <= int(self.seed) < 2 ** 63):
            raise ConfigurationError("mc.seed", "seed must be a nonnegative 63-bit integer")

    @property
    def steps(self) -> int:
        return int(round(self.T / self.dt))


@dataclass
class PathEnsemble:
    """Accumulated cost integrals and endpoint states of one simulation."""

    costs: np.ndarray             # (N,) integral of relaxed cost over [0, T)
    final_states: np.ndarray      # (N, d)
    checkpoint_costs: np.ndarray  # (n_checkpoints, N) integrals at earlier horizons
    checkpoints: tuple
    diverged: np.ndarray          # (N,) state or cost left the reals
    clamped: np.ndarray           # (N,) strategy lookup ever fell outside the box
    batch_sizes: list[int]


@dataclass
class RiskEstimate:
    """Risk-sensitive value estimate with dispersion diagnostics."""

    value: float
    stderr: float                 # delta method through the exponential mean
    log_moments: list[float]      # per-batch log of the mean exponential
    effective_tail: float         # share of exponential mass on the top 1% of paths
    unreliable: bool              # heavy tail: one-percent share above 1/2
    n_paths: int
    diverged_fraction: float
    clamped_fraction: float


@dataclass
class GrowthEstimate:
    """Two-horizon growth rate (log-moment slope), cancelling O(1/T) offsets."""

    value: float
    stderr: float
    t_lo: float
    t_hi: float
    n_paths: int
    effective_tail: float
    diverged_fraction: float = 0.0
    clamped_fraction: float = 0.0

    @property
    def unreliable(self) -> bool:
        return self.effective_tail > 0.5


@dataclass
class DeviationOutcome:
    player: int
    label: str
    value: float
    stderr: float
    margin: float                 # slack remaining in the saddle inequality
    ok: bool
    unreliable: bool


@dataclass
class VerifyReport:
    lambda_hat: float
    center: GrowthEstimate
    center_ok: bool
    outcomes: list[DeviationOutcome]
    passed: bool
    notes: list[str] = field(default_factory=list)


@dataclass
class RepresentationReport:
    relative_error: float
    lhs: float
    rhs: float
    n_hit: int
    capped_fraction: float
    diverged_fraction: float
    inconclusive: bool
    note: str = ""


def _check_fields(model: GameModel, f1: StrategyField, f2: StrategyField):
    if len(f1.actions) != model.n1 or len(f2.actions) != model.n2:
        raise ConfigurationError(
            "strategy.actions", "field action counts do not match the model")
    g1, g2 = f1.grid, f2.grid
    if (g1.d, g1.h, g1.radius, g1.shape) != (g2.d, g2.h, g2.radius, g2.shape):
        raise ConfigurationError("strategy.grid", "the two fields live on different grids")
    return g1


def _pair_table(model: GameModel, f1: StrategyField, f2: StrategyField):
    """Per-node product weights (Ni, m*n) and the pure pairs actually used."""
    P = np.einsum("ki,kj->kij", f1.weights, f2.weights)
    P = P.reshape(P.shape[0], -1)
    pairs = list(model.pure_pairs())
    used = [t for t in range(len(pairs)) if P[:, t].max() > 0.0]
    return P, pairs, used


def _sigma_step(model: GameModel, X: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """sigma(X) xi with broadcast for state-independent diffusion."""
    sig = np.asarray(model.diffusion(X), dtype=float)
    if sig.shape == (model.d, model.d):
        return xi @ sig.T
    return np.einsum("kij,kj->ki", sig, xi)


def _relaxed_coeffs(model, X, Pw, pairs, used):
    """Mixture-averaged drift and cost at continuous states."""
    W = X.shape[0]
    b = np.zeros_like(X)
    c = np.zeros(W)
    for t in used:
        _, _, u1, u2 = pairs[t]
        wt = Pw[:, t]
        b += wt[:, None] * np.asarray(model.drift(X, u1, u2), float).reshape(W, model.d)
        c += wt * np.asarray(model.cost(X, u1, u2), float).reshape(W)
    return b, c


def _horizon_batch(model, f1, f2, cfg: SimConfig, batch_index: int, n_b: int,
                   ckpt_steps: tuple):
    """One substream's paths to the horizon; returns (S, X_T, ckpts, clamped)."""
    grid = f1.grid
    rng = np.random.Generator(
        np.random.Philox(key=np.array([cfg.seed, batch_index], dtype=np.uint64)))
    P, pairs, used = _pair_table(model, f1, f2)
    d = model.d
    X = np.tile(np.asarray(cfg.x0, float), (n_b, 1))
    S = np.zeros(n_b)
    clamped = np.zeros(n_b, dtype=bool)
    ckpts = np.empty((len(ckpt_steps), n_b))
    sqdt = np.sqrt(cfg.dt)
    with np.errstate(all="ignore"):
        for step in range(cfg.steps):
            slots, clamp = nearest_interior(grid, X)
            clamped |= clamp
            b, c = _relaxed_coeffs(model, X, P[slots], pairs, used)
            S += c * cfg.dt
            xi = rng.standard_normal((n_b, d))
            X = X + b * cfg.dt + sqdt * _sigma_step(model, X, xi)
            for ci, cs in enumerate(ckpt_steps):
                if step + 1 == cs:
                    ckpts[ci] = S
    return S, X, ckpts, clamped


def _batch_layout(n: int):
    sizes = []
    while n > 0:
        sizes.append(min(_BATCH, n))
        n -= sizes[-1]
    return sizes


def _dispatch(worker_fn, payloads, workers: int):
    if workers <= 1 or len(payloads) <= 1:
        return [worker_fn(*p) for p in payloads]
    ctx = multiprocessing.get_context("fork")
    with ProcessPoolExecutor(max_workers=min(workers, len(payloads)),
                             mp_context=ctx) as pool:
        return list(pool.map(_star, [(worker_fn, p) for p in payloads]))


def _star(args):
    fn, p = args
    return fn(*p)


def simulate_paths(model: GameModel, f1: StrategyField, f2: StrategyField,
                   cfg: SimConfig, workers: int = 1,
                   checkpoints: tuple = ()) -> PathEnsemble:
    """Simulate the controlled SDE under two strategy fields.

    Optional `checkpoints` record the cost integral at earlier horizons
    from the same paths (each must be a multiple of dt below T).
    """
    grid = _check_fields(model, f1, f2)
    if len(cfg.x0) != model.d:
        raise ConfigurationError("mc.x0", f"start point must have dimension {model.d}")
    del grid
    ckpt_steps = []
    for tc in checkpoints:
        sc = int(round(tc / cfg.dt))
        if not (1 <= sc <= cfg.steps) or abs(sc * cfg.dt - tc) > 1e-9 * max(1.0, tc):
            raise ConfigurationError(
                "mc.checkpoints", f"checkpoint {tc} must be a multiple of dt within (0, T]")
        ckpt_steps.append(sc)
    sizes = _batch_layout(int(cfg.paths))
    payloads = [(model, f1, f2, cfg, b, n_b, tuple(ckpt_steps))
                for b, n_b in enumerate(sizes)]
    parts = _dispatch(_horizon_batch, payloads, workers)
    S = np.concatenate([p[0] for p in parts])
    X = np.vstack([p[1] for p in parts])
    ck = np.concatenate([p[2] for p in parts], axis=1) if ckpt_steps else \
        np.empty((0, S.size))
    clamped = np.concatenate([p[3] for p in parts])
    diverged = ~np.isfinite(S) | ~np.all(np.isfinite(X), axis=1)
    if ckpt_steps:
        diverged |= ~np.all(np.isfinite(ck), axis=0)
    return PathEnsemble(costs=S, final_states=X, checkpoint_costs=ck,
                        checkpoints=tuple(checkpoints), diverged=diverged,
                        clamped=clamped, batch_sizes=sizes)


def _guard_divergence(ens: PathEnsemble) -> np.ndarray:
    frac = float(np.mean(ens.diverged))
    if frac > 0.01:
        raise EstimationError(
            f"{100 * frac:.2f}% of paths diverged; estimation refused")
    return ~ens.diverged


def _tail_share(S: np.ndarray) -> float:
    k = max(1, int(np.ceil(0.01 * S.size)))
    shifted = np.exp(S - S.max())
    top = np.sort(shifted)[-k:]
    return float(top.sum() / shifted.sum())


def _estimate_from_costs(S: np.ndarray, T: float, batch_slices,
                         diverged_fraction: float,
                         clamped_fraction: float) -> RiskEstimate:
    M = float(S.max())
    Z = np.exp(S - M)
    mz = float(Z.mean())
    value = (np.log(mz) + M) / T
    stderr = float(Z.std(ddof=1) / (np.sqrt(S.size) * mz * T)) if S.size > 1 else np.inf
    log_moments = []
    for sl in batch_slices:
        part = S[sl]
        if part.size:
            log_moments.append(float(logsumexp(part) - np.log(part.size)))
    tail = _tail_share(S)
    return RiskEstimate(value=float(value), stderr=stderr, log_moments=log_moments,
                        effective_tail=tail, unreliable=tail > 0.5, n_paths=int(S.size),
                        diverged_fraction=diverged_fraction,
                        clamped_fraction=clamped_fraction)


def _valid_batch_slices(ens: PathEnsemble, keep: np.ndarray):
    """Slices of the kept-path array corresponding to original batches."""
    slices = []
    start = 0
    offset = 0
    for n_b in ens.batch_sizes:
        kept = int(np.count_nonzero(keep[start:start + n_b]))
        slices.append(slice(offset, offset + kept))
        offset += kept
        start += n_b
    return slices


def estimate_risk_sensitive(model: GameModel, f1: StrategyField, f2: StrategyField,
                            cfg: SimConfig, workers: int = 1,
                            ensemble: PathEnsemble | None = None) -> RiskEstimate:
    """(1/T) log path-average of exp(integral of cost), with stderr."""
    ens = ensemble if ensemble is not None else simulate_paths(model, f1, f2, cfg,
                                                               workers=workers)
    keep = _guard_divergence(ens)
    if not keep.any():
        raise EstimationError("all paths diverged")
    return _estimate_from_costs(
        ens.costs[keep], cfg.T, _valid_batch_slices(ens, keep),
        float(np.mean(ens.diverged)), float(np.mean(ens.clamped)))


def estimate_growth_rate(model: GameModel, f1: StrategyField, f2: StrategyField,
                         cfg: SimConfig, t_pair: tuple = (10.0, 20.0),
                         workers: int = 1) -> GrowthEstimate:
    """Slope of the log moment between two horizons on common paths.

    The single-horizon estimator carries an O(1/T) offset from the
    eigenfunction ratio at the endpoints; differencing two horizons of the
    same ensemble cancels the constant part of that offset.
    """
    t_lo, t_hi = (float(t) for t in t_pair)
    if not (0 < t_lo < t_hi):
        raise ConfigurationError("mc.checkpoints", "need 0 < t_lo < t_hi")
    if abs(t_hi - cfg.T) > 1e-9:
        raise ConfigurationError("mc.T", "upper horizon must equal cfg.T")
    ens = simulate_paths(model, f1, f2, cfg, workers=workers, checkpoints=(t_lo,))
    keep = _guard_divergence(ens)
    S_lo = ens.checkpoint_costs[0][keep]
    S_hi = ens.costs[keep]
    n = S_lo.size
    if n == 0:
        raise EstimationError("all paths diverged")

    def log_mean_and_se(S):
        Z = np.exp(S - S.max())
        mz = Z.mean()
        return float(np.log(mz) + S.max()), float(Z.std(ddof=1) / (np.sqrt(n) * mz))

    lm_lo, se_lo = log_mean_and_se(S_lo)
    lm_hi, se_hi = log_mean_and_se(S_hi)
    span = t_hi - t_lo
    return GrowthEstimate(value=(lm_hi - lm_lo) / span,
                          stderr=(se_lo + se_hi) / span,
                          t_lo=t_lo, t_hi=t_hi, n_paths=n,
                          effective_tail=_tail_share(S_hi),
                          diverged_fraction=float(np.mean(ens.diverged)),
                          clamped_fraction=float(np.mean(ens.clamped)))


def estimate_horizon_trend(model: GameModel, f1: StrategyField, f2: StrategyField,
                           cfg: SimConfig, horizons: tuple = (5.0, 10.0, 20.0),
                           workers: int = 1):
    """Value estimates at several horizons from one ensemble (bias trend)."""
    hs = sorted(float(t) for t in horizons)
    if abs(hs[-1] - cfg.T) > 1e-9:
        raise ConfigurationError("mc.T", "largest horizon must equal cfg.T")
    ens = simulate_paths(model, f1, f2, cfg, workers=workers,
                         checkpoints=tuple(hs[:-1]))
    keep = _guard_divergence(ens)
    slices = _valid_batch_slices(ens, keep)
    div = float(np.mean(ens.diverged))
    clamp = float(np.mean(ens.clamped))
    out = []
    for i, t in enumerate(hs[:-1]):
        out.append((t, _estimate_from_costs(ens.checkpoint_costs[i][keep], t,
                                            slices, div, clamp)))
    out.append((hs[-1], _estimate_from_costs(ens.costs[keep], hs[-1], slices,
                                             div, clamp)))
    return out


def make_deviations(base: StrategyField, count: int, seed: int,
                    eps: float = 0.1) -> list[tuple[str, StrategyField]]:
    """Deviation library for one player: constant-action fields, an
    eps-mixture of the base field with uniform, and random point-mass fields."""
    if count < 1:
        return []
    grid, actions = base.grid, base.actions
    n_act = len(actions)
    rng = np.random.default_rng(seed)
    out: list[tuple[str, StrategyField]] = []
    for a in range(n_act):
        if len(out) >= count:
            return out
        out.append((f"const[{actions.labels[a]}]",
                    StrategyField.constant(grid, actions, a)))
    if len(out) < count and n_act > 1:
        w = (1.0 - eps) * base.weights + eps / n_act
        out.append((f"mix-eps{eps:g}", StrategyField(grid=grid, actions=actions, weights=w)))
    k = 0
    while len(out) < count:
        idx = rng.integers(0, n_act, size=grid.n_interior)
        out.append((f"random-{k}", StrategyField.from_indices(grid, actions, idx)))
        k += 1
    return out


def late_window(cfg: SimConfig) -> tuple[float, float]:
    """Growth-rate window over the last quarter of the horizon.

    The two-horizon slope cancels the constant part of the finite-horizon
    offset; what remains decays with the lower horizon, so the latest
    window has the least bias and an honestly wider standard error.
    """
    t_lo = round(0.75 * cfg.T / cfg.dt) * cfg.dt
    return (t_lo, cfg.T)


def verify_saddle(model: GameModel, v1: StrategyField, v2: StrategyField,
                  lambda_hat: float, deviations, cfg: SimConfig,
                  workers: int = 1) -> VerifyReport:
    """Check the saddle inequalities against a deviation suite.

    Player 2 deviations must not push the estimate above lambda_hat, and
    player 1 deviations must not pull it below, each within three standard
    errors.  The center pair is always estimated and compared.  A pass
    means "no violation found", not optimality.

    All comparisons use the late-window growth-rate estimator: the raw
    single-horizon value carries a state-dependent O(1/T) offset that would
    dwarf the standard error at tight path counts, flagging violations
    that say nothing about the strategies under test.
    """
    if isinstance(deviations, dict):
        dev1 = deviations.get("player1", [])
        dev2 = deviations.get("player2", [])
    else:
        dev1, dev2 = deviations
    window = late_window(cfg)

    def labeled(devs, prefix):
        out = []
        for i, d in enumerate(devs):
            if isinstance(d, tuple):
                out.append((f"{prefix}:{d[0]}", d[1]))
            else:
                out.append((f"{prefix}:{i}", d))
        return out

    notes: list[str] = []
    center = estimate_growth_rate(model, v1, v2, cfg, t_pair=window,
                                  workers=workers)
    center_ok = abs(center.value - lambda_hat) <= 3 * center.stderr
    if center.unreliable:
        notes.append("center estimate is heavy-tailed; margins may be loose")
    outcomes: list[DeviationOutcome] = []
    for label, f in labeled(dev2, "p2"):
        est = estimate_growth_rate(model, v1, f, cfg, t_pair=window,
                                   workers=workers)
        margin = lambda_hat + 3 * est.stderr - est.value
        outcomes.append(DeviationOutcome(player=2, label=label, value=est.value,
                                         stderr=est.stderr, margin=margin,
                                         ok=margin >= 0, unreliable=est.unreliable))
    for label, f in labeled(dev1, "p1"):
        est = estimate_growth_rate(model, f, v2, cfg, t_pair=window,
                                   workers=workers)
        margin = est.value - (lambda_hat - 3 * est.stderr)
        outcomes.append(DeviationOutcome(player=1, label=label, value=est.value,
                                         stderr=est.stderr, margin=margin,
                                         ok=margin >= 0, unreliable=est.unreliable))
    passed = center_ok and all(o.ok for o in outcomes)
    return VerifyReport(lambda_hat=lambda_hat, center=center, center_ok=center_ok,
                        outcomes=outcomes, passed=passed, notes=notes)


def _value_interp(grid, V: np.ndarray):
    if grid.d == 1:
        nodes = grid.interior_points()[:, 0]

        def interp(pts):
            return np.interp(pts[:, 0], nodes, V)
        return interp
    from scipy.interpolate import RegularGridInterpolator

    n = grid.shape[0]
    axis = (np.arange(n) - (n - 1) // 2) * grid.h
    full = np.zeros(grid.points.shape[0])
    full[grid.interior] = V
    rgi = RegularGridInterpolator((axis, axis), full.reshape(n, n),
                                  bounds_error=False, fill_value=None)

    def interp(pts):
        lim = grid.radius
        return np.asarray(rgi(np.clip(pts, -lim, lim)), dtype=float)
    return interp


def _hitting_batch(model, f1, f2, cfg: SimConfig, batch_index: int, n_b: int,
                   lam: float, ball_radius: float, V_vals: np.ndarray):
    grid = f1.grid
    rng = np.random.Generator(
        np.random.Philox(key=np.array([cfg.seed, batch_index], dtype=np.uint64)))
    interp = _value_interp(grid, V_vals)
    P, pairs, used = _pair_table(model, f1, f2)
    d = model.d
    X = np.tile(np.asarray(cfg.x0, float), (n_b, 1))
    A = np.zeros(n_b)
    log_contrib = np.full(n_b, np.nan)
    active = np.ones(n_b, dtype=bool)
    sqdt = np.sqrt(cfg.dt)
    with np.errstate(all="ignore"):
        for _ in range(cfg.steps):
            dist = np.linalg.norm(X, axis=1)
            hit = active & (dist <= ball_radius)
            if hit.any():
                vq = np.maximum(interp(X[hit]), 1e-300)
                log_contrib[hit] = A[hit] + np.log(vq)
                active &= ~hit
            if not active.any():
                break
            slots, _ = nearest_interior(grid, X)
            b, c = _relaxed_coeffs(model, X, P[slots], pairs, used)
            A += (c - lam) * cfg.dt
            xi = rng.standard_normal((n_b, d))
            X = X + b * cfg.dt + sqdt * _sigma_step(model, X, xi)
    bad = ~np.isfinite(A) | ~np.all(np.isfinite(X), axis=1)
    capped = active & ~bad
    return log_contrib, capped, bad


def check_representation(model: GameModel, V: np.ndarray, lambda_hat: float,
                         v1: StrategyField, v2: StrategyField, ball_radius: float,
                         cfg: SimConfig, workers: int = 1) -> RepresentationReport:
    """Hitting-time identity for the eigenfunction:
    V(x0) = E[exp(integral of (c - lambda) to the ball entry) * V(X_entry)].

    Paths run until they first enter the centered ball of the given radius;
    paths still outside at the horizon are capped and counted separately.
    More than 5% capped (or diverged) marks the check inconclusive.
    """
    grid = _check_fields(model, v1, v2)
    V = np.asarray(V, dtype=float)
    if V.shape != (grid.n_interior,):
        raise ConfigurationError(
            "verify.valueField", f"expected shape ({grid.n_interior},), got {V.shape}")
    if ball_radius <= 0 or ball_radius >= grid.radius:
        raise ConfigurationError(
            "verify.ballRadius", "ball radius must sit inside the solved box")
    x0 = np.asarray(cfg.x0, float)
    lhs = float(_value_interp(grid, V)(x0[None, :])[0])
    if np.linalg.norm(x0) <= ball_radius:
        return RepresentationReport(relative_error=0.0, lhs=lhs, rhs=lhs, n_hit=0,
                                    capped_fraction=0.0, diverged_fraction=0.0,
                                    inconclusive=False,
                                    note="start point inside the ball: identity is trivial")
    sizes = _batch_layout(int(cfg.paths))
    payloads = [(model, v1, v2, cfg, b, n_b, float(lambda_hat), float(ball_radius), V)
                for b, n_b in enumerate(sizes)]
    parts = _dispatch(_hitting_batch, payloads, workers)
    log_contrib = np.concatenate([p[0] for p in parts])
    capped = np.concatenate([p[1] for p in parts])
    bad = np.concatenate([p[2] for p in parts])
    hit = np.isfinite(log_contrib)
    n = log_contrib.size
    n_hit = int(np.count_nonzero(hit))
    capped_fraction = float(np.mean(capped))
    diverged_fraction = float(np.mean(bad))
    if n_hit == 0:
        raise EstimationError("no path reached the ball before the horizon")
    rhs = float(np.exp(logsumexp(log_contrib[hit]) - np.log(n_hit)))
    rel = abs(lhs - rhs) / abs(lhs)
    inconclusive = (n - n_hit) / n > 0.05
    note = "over 5% of paths were capped at the horizon" if inconclusive else ""
    return RepresentationReport(relative_error=float(rel), lhs=lhs, rhs=rhs,
                                n_hit=n_hit, capped_fraction=capped_fraction,
                                diverged_fraction=diverged_fraction,
                                inconclusive=inconclusive, note=note)
