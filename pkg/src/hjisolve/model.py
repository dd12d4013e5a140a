"""Controlled-diffusion game models and their analytic sanity checks.

A model is a controlled SDE  dX = b(X, u1, u2) dt + sigma(X) dW  on R^d
(d = 1 or 2) together with a running cost c(x, u1, u2) >= 0 and one finite
action set per player.  Player 1 minimises and player 2 maximises the
long-run exponential growth rate of E[exp(integral of c)].

Evaluator contract (vectorised):
    drift(x, u1, u2) -> (..., d)   for x of shape (..., d), scalar actions
    diffusion(x)     -> (..., d, d) or a constant (d, d)
    cost(x, u1, u2)  -> (...,)

Mixed (relaxed) actions enter through `relaxed_drift` / `relaxed_cost`,
which average the pure-pair evaluations with the product of the two
players' weights.  Everything downstream relies on that bilinearity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, ModelEvaluationError

__all__ = [
    "ActionSet",
    "MixedAction",
    "GameModel",
    "LyapunovCertificate",
    "ConditionReport",
    "AssumptionReport",
    "relaxed_drift",
    "relaxed_cost",
    "check_condition",
    "check_assumptions",
    "make_model_1d",
    "model_from_spec",
    "certificate_from_spec",
    "builtin_model",
    "builtin_certificate",
    "builtin_names",
]

WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class ActionSet:
    """A finite set of labelled actions; values are passed to evaluators."""

    labels: tuple[str, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.labels) == 0:
            raise ConfigurationError("actions.labels", "action set must be non-empty")
        if len(self.labels) != len(self.values):
            raise ConfigurationError(
                "actions", f"{len(self.labels)} labels but {len(self.values)} values")
        if len(set(self.labels)) != len(self.labels):
            raise ConfigurationError("actions.labels", "labels must be unique")

    def __len__(self) -> int:
        return len(self.labels)

    @staticmethod
    def singleton(value: float = 0.0, label: str = "fixed") -> "ActionSet":
        return ActionSet(labels=(label,), values=(value,))

    @staticmethod
    def from_values(values: Sequence[float]) -> "ActionSet":
        vals = tuple(float(v) for v in values)
        return ActionSet(labels=tuple(f"u={v:g}" for v in vals), values=vals)


@dataclass(frozen=True)
class MixedAction:
    """A probability vector over one player's actions."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise ConfigurationError("mixed.weights", "weights must be a 1-d vector")
        if not np.all(np.isfinite(w)):
            raise ConfigurationError("mixed.weights", "weights must be finite")
        if np.any(w < -WEIGHT_TOL):
            raise ConfigurationError("mixed.weights", f"negative weight {w.min():g}")
        if abs(float(w.sum()) - 1.0) > WEIGHT_TOL:
            raise ConfigurationError(
                "mixed.weights", f"weights sum to {w.sum():.17g}, not 1")
        object.__setattr__(self, "weights", np.clip(w, 0.0, None))

    @staticmethod
    def point_mass(index: int, n: int) -> "MixedAction":
        w = np.zeros(n)
        w[index] = 1.0
        return MixedAction(w)

    @staticmethod
    def uniform(n: int) -> "MixedAction":
        return MixedAction(np.full(n, 1.0 / n))


def _as_weights(nu, actions: ActionSet) -> np.ndarray:
    if isinstance(nu, MixedAction):
        w = nu.weights
    else:
        w = np.asarray(nu, dtype=float)
    if w.shape != (len(actions),):
        raise ConfigurationError(
            "mixed.weights",
            f"expected {len(actions)} weights, got shape {w.shape}")
    return w


@dataclass(frozen=True)
class GameModel:
    """An immutable two-player controlled diffusion with running cost."""

    d: int
    drift: Callable
    diffusion: Callable
    cost: Callable
    actions1: ActionSet
    actions2: ActionSet
    name: str = ""

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ConfigurationError("model.d", f"dimension must be 1 or 2, got {self.d}")
        x0 = np.zeros((1, self.d))
        a0 = self.a_matrix(x0)
        if a0.shape[-2:] != (self.d, self.d):
            raise ConfigurationError(
                "model.diffusion", f"diffusion must yield ({self.d},{self.d}) blocks")
        for i, j, u1, u2 in self.pure_pairs():
            b = np.asarray(self.drift(x0, u1, u2), dtype=float)
            c = np.asarray(self.cost(x0, u1, u2), dtype=float)
            if b.shape[-1] != self.d or not np.all(np.isfinite(b)):
                raise ModelEvaluationError(
                    f"drift at origin for actions ({u1}, {u2}) is malformed")
            if not np.all(np.isfinite(c)):
                raise ModelEvaluationError(
                    f"cost at origin for actions ({u1}, {u2}) is not finite")
            if np.any(c < 0):
                raise ModelEvaluationError("running cost must be nonnegative")

    def pure_pairs(self):
        """Yield (i, j, value1, value2) over all pure action pairs."""
        for i, u1 in enumerate(self.actions1.values):
            for j, u2 in enumerate(self.actions2.values):
                yield i, j, u1, u2

    def a_matrix(self, x: np.ndarray) -> np.ndarray:
        """Diffusion matrix a = sigma sigma^T, broadcast over points."""
        sig = np.asarray(self.diffusion(np.asarray(x, dtype=float)), dtype=float)
        if sig.ndim == 2 and sig.shape == (self.d, self.d):
            sig = np.broadcast_to(sig, np.shape(x)[:-1] + (self.d, self.d))
        return sig @ np.swapaxes(sig, -1, -2)

    @property
    def n1(self) -> int:
        return len(self.actions1)

    @property
    def n2(self) -> int:
        return len(self.actions2)


def relaxed_drift(model: GameModel, x: np.ndarray, nu1, nu2) -> np.ndarray:
    """Drift under a mixed action pair: sum_ij w1_i w2_j b(x, u1_i, u2_j)."""
    w1 = _as_weights(nu1, model.actions1)
    w2 = _as_weights(nu2, model.actions2)
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape[:-1] + (model.d,))
    for i, j, u1, u2 in model.pure_pairs():
        w = w1[i] * w2[j]
        if w == 0.0:
            continue
        try:
            out += w * np.asarray(model.drift(x, u1, u2), dtype=float)
        except Exception as exc:  # noqa: BLE001 - rewrap with context
            raise ModelEvaluationError(f"drift failed at actions ({u1}, {u2}): {exc}") from exc
    if not np.all(np.isfinite(out)):
        raise ModelEvaluationError("relaxed drift is not finite")
    return out


def relaxed_cost(model: GameModel, x: np.ndarray, nu1, nu2) -> np.ndarray:
    """Cost under a mixed action pair: sum_ij w1_i w2_j c(x, u1_i, u2_j)."""
    w1 = _as_weights(nu1, model.actions1)
    w2 = _as_weights(nu2, model.actions2)
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape[:-1])
    for i, j, u1, u2 in model.pure_pairs():
        w = w1[i] * w2[j]
        if w == 0.0:
            continue
        try:
            out += w * np.asarray(model.cost(x, u1, u2), dtype=float)
        except Exception as exc:  # noqa: BLE001
            raise ModelEvaluationError(f"cost failed at actions ({u1}, {u2}): {exc}") from exc
    if not np.all(np.isfinite(out)):
        raise ModelEvaluationError("relaxed cost is not finite")
    return out


# ---------------------------------------------------------------------------
# Stability certificates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LyapunovCertificate:
    """A candidate geometric-drift certificate.

    kind "condition-2.1": max_u L^u V <= beta 1_K - gamma V with the cost
    bounded and sup c < gamma.
    kind "condition-2.2": max_u L^u V <= beta 1_K - ell V with ell growing
    without bound and max_u c / ell <= theta < 1 outside K.
    """

    lyap: Callable
    kind: str
    compact_radius: float
    beta: float
    gamma: float | None = None
    ell: Callable | None = None
    theta: float | None = None

    def __post_init__(self):
        if self.kind not in ("condition-2.1", "condition-2.2"):
            raise ConfigurationError("certificate.kind", f"unknown kind {self.kind!r}")
        if self.kind == "condition-2.1" and self.gamma is None:
            raise ConfigurationError("certificate.gamma", "condition-2.1 needs gamma > 0")
        if self.kind == "condition-2.2":
            if self.ell is None:
                raise ConfigurationError("certificate.ell", "condition-2.2 needs ell")
            if self.theta is None or not (0.0 < self.theta < 1.0):
                raise ConfigurationError("certificate.theta", "need theta in (0, 1)")


@dataclass
class ConditionReport:
    kind: str
    passed: bool
    worst_margin: float
    violations: list
    cost_check: dict
    inf_compact_ok: bool | None
    notes: list


@dataclass
class AssumptionReport:
    bands: list
    growth_constant: float
    degenerate_bands: list
    notes: list


def _axis_shift(arr: np.ndarray, axis: int, offset: int, trim: int) -> np.ndarray:
    """View of `arr` shifted by `offset` cells along `axis`, trimmed by
    `trim` cells on every axis so all requested shifts stay in bounds."""
    sl = []
    for ax in range(arr.ndim):
        lo, hi = trim, arr.shape[ax] - trim
        if ax == axis:
            lo += offset
            hi += offset
        sl.append(slice(lo, hi if hi != 0 else None))
    return arr[tuple(sl)]


def _lyap_derivatives(V: np.ndarray, h: float, d: int, trim: int = 2):
    """Central-difference derivatives of a lattice function, trimmed so the
    widest (5-point) stencil stays inside the lattice.  Returns dicts keyed
    by axis plus the mixed second derivative for d = 2."""
    D1, D2, D3, D4 = {}, {}, {}, {}
    c = _axis_shift(V, 0, 0, trim)
    for ax in range(d):
        p1 = _axis_shift(V, ax, 1, trim)
        m1 = _axis_shift(V, ax, -1, trim)
        p2 = _axis_shift(V, ax, 2, trim)
        m2 = _axis_shift(V, ax, -2, trim)
        D1[ax] = (p1 - m1) / (2 * h)
        D2[ax] = (p1 - 2 * c + m1) / (h * h)
        D3[ax] = (p2 - 2 * p1 + 2 * m1 - m2) / (2 * h ** 3)
        D4[ax] = (p2 - 4 * p1 + 6 * c - 4 * m1 + m2) / (h ** 4)
    Dcross = None
    if d == 2:
        def diag(o1, o2):
            sl0 = slice(trim + o1, V.shape[0] - trim + o1 or None)
            sl1 = slice(trim + o2, V.shape[1] - trim + o2 or None)
            return V[sl0, sl1]
        Dcross = (diag(1, 1) - diag(1, -1) - diag(-1, 1) + diag(-1, -1)) / (4 * h * h)
    return c, D1, D2, D3, D4, Dcross


def _inner_points(grid, trim: int = 2):
    """Lattice points with a full 2-cell margin, as (M, d) coordinates."""
    shape = grid.shape
    axes = [np.arange(trim, n - trim) for n in shape]
    coords = [(-grid.radius + grid.h * ix) for ix in axes]
    if grid.d == 1:
        pts = coords[0][:, None]
    else:
        X1, X2 = np.meshgrid(coords[0], coords[1], indexing="ij")
        pts = np.stack([X1.ravel(), X2.ravel()], axis=-1)
    return pts


def check_condition(model: GameModel, cert: LyapunovCertificate, probe) -> ConditionReport:
    """Numerically probe a geometric-drift certificate on a lattice.

    Derivatives of the candidate function are formed by central differences
    at the probe spacing, the controlled generator is maximised over pure
    action pairs, and the defining inequality is tested with a slack that
    tracks the local finite-difference truncation error (estimated from
    third/fourth differences of the candidate).  Passing is therefore
    evidence at lattice resolution, not a proof.
    """
    h, d = probe.h, probe.d
    pts_all = probe.points.reshape(probe.shape + (d,))
    V_full = np.asarray(cert.lyap(pts_all.reshape(-1, d)), dtype=float).reshape(probe.shape)
    if not np.all(np.isfinite(V_full)):
        raise ModelEvaluationError("certificate candidate is not finite on the probe")
    if np.any(V_full <= 0):
        raise ModelEvaluationError("certificate candidate must be strictly positive")

    trim = 2
    Vc, D1, D2, D3, D4, Dcross = _lyap_derivatives(V_full, h, d, trim)
    pts = _inner_points(probe, trim)
    M = pts.shape[0]
    Vc = Vc.reshape(M)
    a = model.a_matrix(pts)

    Lmax = np.full(M, -np.inf)
    cmax = np.full(M, -np.inf)
    babs_max = np.zeros((M, d))
    for i, j, u1, u2 in model.pure_pairs():
        b = np.asarray(model.drift(pts, u1, u2), dtype=float).reshape(M, d)
        c = np.asarray(model.cost(pts, u1, u2), dtype=float).reshape(M)
        L = np.zeros(M)
        for ax in range(d):
            L += 0.5 * a[:, ax, ax] * D2[ax].reshape(M) + b[:, ax] * D1[ax].reshape(M)
        if d == 2:
            L += a[:, 0, 1] * Dcross.reshape(M)
        Lmax = np.maximum(Lmax, L)
        cmax = np.maximum(cmax, c)
        babs_max = np.maximum(babs_max, np.abs(b))
    if not np.all(np.isfinite(Lmax)):
        raise ModelEvaluationError("generator evaluation is not finite on the probe")

    # truncation-error slack: central D2 errs like h^2/12 |V''''|, D1 like
    # h^2/6 |V'''|; the 2-d mixed stencil is bounded the same way
    slack = np.full(M, 1e-9) + 1e-9 * np.abs(Vc)
    for ax in range(d):
        slack += 2.0 * h * h * (
            a[:, ax, ax] * np.abs(D4[ax].reshape(M)) / 24.0
            + babs_max[:, ax] * np.abs(D3[ax].reshape(M)) / 6.0)
    if d == 2:
        cross = np.abs(a[:, 0, 1]) * (np.abs(D4[0].reshape(M)) + np.abs(D4[1].reshape(M)))
        slack += 2.0 * h * h * cross / 6.0

    radii = np.linalg.norm(pts, axis=-1)
    in_compact = radii <= cert.compact_radius
    notes: list[str] = []
    cost_check: dict = {}
    inf_compact_ok = None

    if cert.kind == "condition-2.1":
        rhs = cert.beta * in_compact - cert.gamma * Vc
        sup_cost = float(cmax.max())
        cost_check = {"sup_cost": sup_cost, "gamma": cert.gamma,
                      "ok": sup_cost < cert.gamma}
        if not cost_check["ok"]:
            notes.append(f"sup cost {sup_cost:.6g} is not below gamma {cert.gamma:g}")
    else:
        ell = np.asarray(cert.ell(pts), dtype=float).reshape(M)
        if not np.all(np.isfinite(ell)):
            raise ModelEvaluationError("ell is not finite on the probe")
        rhs = cert.beta * in_compact - ell * Vc
        outside = ~in_compact
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(outside & (ell > 0), cmax / np.where(ell > 0, ell, 1.0), 0.0)
        worst_ratio = float(ratio[outside].max()) if outside.any() else 0.0
        ratio_ok = worst_ratio <= cert.theta + 1e-12 and np.all(ell[outside] > 0)
        cost_check = {"worst_cost_over_ell": worst_ratio, "theta": cert.theta,
                      "ok": bool(ratio_ok)}
        if not ratio_ok:
            notes.append(f"max cost/ell {worst_ratio:.6g} exceeds theta {cert.theta:g}")
        inf_compact_ok = _probe_inf_compact(cert.ell, probe, cert.compact_radius)
        if not inf_compact_ok:
            notes.append("ell does not grow monotonically along probe rays")

    margin = rhs - Lmax
    bad = margin < -slack
    worst = float(margin.min()) if M else math.inf
    violations = [(tuple(np.atleast_1d(pts[k]).tolist()), float(margin[k]))
                  for k in np.flatnonzero(bad)[:10]]
    passed = (not bad.any()) and cost_check.get("ok", True) and (inf_compact_ok in (None, True))
    return ConditionReport(kind=cert.kind, passed=bool(passed), worst_margin=worst,
                           violations=violations, cost_check=cost_check,
                           inf_compact_ok=inf_compact_ok, notes=notes)


def _probe_inf_compact(ell: Callable, probe, compact_radius: float) -> bool:
    """Monotone growth of ell along lattice rays beyond the compact set."""
    h, d = probe.h, probe.d
    n = probe.shape[0]
    center = (n - 1) // 2
    dirs = [(1,), (-1,)] if d == 1 else [(1, 0), (-1, 0), (0, 1), (0, -1),
                                         (1, 1), (1, -1), (-1, 1), (-1, -1)]
    ok = True
    for direction in dirs:
        pts = []
        step = np.asarray(direction, dtype=float)
        k = 1
        while True:
            idx = np.asarray([center] * d) + k * np.asarray(direction)
            if np.any(idx < 0) or np.any(idx >= n):
                break
            pts.append(step * (k * h))
            k += 1
        pts = np.asarray(pts, dtype=float).reshape(-1, d)
        radii = np.linalg.norm(pts, axis=-1)
        sel = radii > compact_radius
        if sel.sum() < 2:
            continue
        vals = np.asarray(ell(pts[sel]), dtype=float).reshape(-1)
        tol = 1e-9 * (1.0 + np.abs(vals[:-1]))
        if np.any(np.diff(vals) < -tol):
            ok = False
    return ok


def check_assumptions(model: GameModel, probe, pairs_per_band: int = 120,
                      seed: int = 0) -> AssumptionReport:
    """Sampled regularity/growth/ellipticity diagnostics.

    Per unit radius band: the worst sampled Lipschitz ratio of drift plus
    diffusion, and the smallest eigenvalue of a = sigma sigma^T over probe
    points.  Globally: the affine-growth constant
    max ( <b, x>^+ + |sigma|_F^2 ) / (1 + |x|^2 ).
    Bands where the diffusion is numerically singular are flagged.
    """
    d = model.d
    pts = probe.points
    radii = np.linalg.norm(pts, axis=-1)
    rmax = float(radii.max())
    nbands = max(1, int(math.ceil(rmax)))
    rng = np.random.default_rng(seed)

    a = model.a_matrix(pts)
    mineig = np.linalg.eigvalsh(a)[:, 0]

    growth = 0.0
    for _, _, u1, u2 in model.pure_pairs():
        b = np.asarray(model.drift(pts, u1, u2), dtype=float).reshape(-1, d)
        inner = np.einsum("kd,kd->k", b, pts)
        sig = np.asarray(model.diffusion(pts), dtype=float)
        if sig.ndim == 2:
            sig = np.broadcast_to(sig, (pts.shape[0], d, d))
        fro2 = np.einsum("kij,kij->k", sig, sig)
        growth = max(growth, float(((np.maximum(inner, 0.0) + fro2)
                                    / (1.0 + radii ** 2)).max()))

    bands = []
    degenerate = []
    for k in range(nbands):
        lo, hi = float(k), float(k + 1)
        # sample point pairs inside the band (uniform in the box, thinned)
        x = rng.uniform(-hi, hi, size=(8 * pairs_per_band, d))
        keep = (np.linalg.norm(x, axis=-1) >= lo) & (np.linalg.norm(x, axis=-1) < hi)
        x = x[keep][: 2 * pairs_per_band]
        if x.shape[0] < 4:
            x = np.linspace(lo, min(hi, rmax), 8)[:, None] * np.ones((1, d)) / math.sqrt(d)
        half = x.shape[0] // 2
        xa, xb = x[:half], x[half: 2 * half]
        dist = np.linalg.norm(xa - xb, axis=-1)
        good = dist > 1e-9
        xa, xb, dist = xa[good], xb[good], dist[good]
        lip = 0.0
        for _, _, u1, u2 in model.pure_pairs():
            ba = np.asarray(model.drift(xa, u1, u2), dtype=float).reshape(-1, d)
            bb = np.asarray(model.drift(xb, u1, u2), dtype=float).reshape(-1, d)
            siga = np.asarray(model.diffusion(xa), dtype=float)
            sigb = np.asarray(model.diffusion(xb), dtype=float)
            if siga.ndim == 2:
                siga = np.broadcast_to(siga, (xa.shape[0], d, d))
                sigb = np.broadcast_to(sigb, (xb.shape[0], d, d))
            num = (np.linalg.norm(ba - bb, axis=-1)
                   + np.sqrt(np.einsum("kij,kij->k", siga - sigb, siga - sigb)))
            if num.size:
                lip = max(lip, float((num / dist).max()))
        band_sel = (radii >= lo) & (radii < hi)
        band_mineig = float(mineig[band_sel].min()) if band_sel.any() else float("nan")
        flagged = bool(band_sel.any() and band_mineig < 1e-10)
        if flagged:
            degenerate.append(k)
        bands.append({"radius": (lo, hi), "lipschitz": lip,
                      "min_eig": band_mineig, "degenerate": flagged})

    notes = []
    if degenerate:
        notes.append(f"diffusion numerically singular in bands {degenerate}")
    return AssumptionReport(bands=bands, growth_constant=growth,
                            degenerate_bands=degenerate, notes=notes)


# ---------------------------------------------------------------------------
# Construction helpers
# ---------------------------------------------------------------------------

class _Scalar1DDrift:
    """Adapts a scalar-signature 1-d drift f(x, u1, u2) to the (..., 1) contract."""

    def __init__(self, fn: Callable):
        self.fn = fn

    def __call__(self, x, u1, u2):
        return np.asarray(self.fn(np.asarray(x)[..., 0], u1, u2), dtype=float)[..., None]


class _Scalar1DCost:
    def __init__(self, fn: Callable):
        self.fn = fn

    def __call__(self, x, u1, u2):
        return np.asarray(self.fn(np.asarray(x)[..., 0], u1, u2), dtype=float)


class _Scalar1DDiffusion:
    def __init__(self, fn: Callable):
        self.fn = fn

    def __call__(self, x):
        return np.asarray(self.fn(np.asarray(x)[..., 0]), dtype=float)[..., None, None]


class ConstantDiffusion:
    """A state-independent diffusion block."""

    def __init__(self, sigma):
        sig = np.atleast_2d(np.asarray(sigma, dtype=float))
        self.sigma = sig

    def __call__(self, x):
        return np.broadcast_to(self.sigma, np.shape(x)[:-1] + self.sigma.shape)


def make_model_1d(drift, cost, sigma=1.0, actions1: ActionSet | None = None,
                  actions2: ActionSet | None = None, name: str = "",
                  diffusion_fn=None) -> GameModel:
    """Build a 1-d model from scalar-signature callables."""
    diffusion = (_Scalar1DDiffusion(diffusion_fn) if diffusion_fn is not None
                 else ConstantDiffusion([[float(sigma)]]))
    return GameModel(
        d=1,
        drift=_Scalar1DDrift(drift),
        diffusion=diffusion,
        cost=_Scalar1DCost(cost),
        actions1=actions1 or ActionSet.singleton(),
        actions2=actions2 or ActionSet.singleton(),
        name=name,
    )


# --- expression-defined models (JSON ingestion) ----------------------------

_EXPR_NAMESPACE = {
    "abs": np.abs, "sign": np.sign, "sqrt": np.sqrt, "exp": np.exp,
    "log": np.log, "sin": np.sin, "cos": np.cos, "tanh": np.tanh,
    "maximum": np.maximum, "minimum": np.minimum, "where": np.where,
    "pi": np.pi, "e": np.e,
}


class Expr:
    """A compiled arithmetic expression over named numpy variables.

    Only the whitelisted math namespace is visible; instances pickle by
    source so expression-defined models survive process boundaries.
    """

    def __init__(self, src: str, variables: tuple[str, ...]):
        if not isinstance(src, str) or not src.strip():
            raise ConfigurationError("model.expression", "expected a non-empty string")
        self.src = src
        self.variables = tuple(variables)
        self._compile()

    def _compile(self):
        try:
            self._code = compile(self.src, "<model-expression>", "eval")
        except SyntaxError as exc:
            raise ConfigurationError("model.expression", f"{self.src!r}: {exc}") from exc
        for name in self._code.co_names:
            if name not in _EXPR_NAMESPACE and name not in self.variables:
                raise ConfigurationError(
                    "model.expression", f"unknown name {name!r} in {self.src!r}")

    def __call__(self, **kw):
        return eval(self._code, {"__builtins__": {}}, {**_EXPR_NAMESPACE, **kw})

    def __getstate__(self):
        return {"src": self.src, "variables": self.variables}

    def __setstate__(self, state):
        self.src = state["src"]
        self.variables = state["variables"]
        self._compile()


class _ExprDrift:
    def __init__(self, exprs: list[Expr], d: int):
        self.exprs = exprs
        self.d = d

    def __call__(self, x, u1, u2):
        x = np.asarray(x, dtype=float)
        kw = ({"x": x[..., 0]} if self.d == 1
              else {"x1": x[..., 0], "x2": x[..., 1]})
        kw.update(u1=u1, u2=u2)
        comps = [np.broadcast_to(np.asarray(e(**kw), dtype=float), x.shape[:-1])
                 for e in self.exprs]
        return np.stack(comps, axis=-1)


class _ExprCost:
    def __init__(self, expr: Expr, d: int):
        self.expr = expr
        self.d = d

    def __call__(self, x, u1, u2):
        x = np.asarray(x, dtype=float)
        kw = ({"x": x[..., 0]} if self.d == 1
              else {"x1": x[..., 0], "x2": x[..., 1]})
        kw.update(u1=u1, u2=u2)
        return np.broadcast_to(np.asarray(self.expr(**kw), dtype=float), x.shape[:-1])


class _ExprDiffusion:
    def __init__(self, exprs, d: int):
        self.exprs = exprs  # nested d x d list of Expr
        self.d = d

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        kw = ({"x": x[..., 0]} if self.d == 1
              else {"x1": x[..., 0], "x2": x[..., 1]})
        rows = []
        for r in self.exprs:
            rows.append([np.broadcast_to(np.asarray(e(**kw), dtype=float), x.shape[:-1])
                         for e in r])
        return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)


def _actions_from_spec(spec, field_name: str) -> ActionSet:
    if spec is None:
        return ActionSet.singleton()
    if not isinstance(spec, dict) or "values" not in spec:
        raise ConfigurationError(field_name, "expected an object with 'values'")
    values = spec["values"]
    if not isinstance(values, list) or not values:
        raise ConfigurationError(f"{field_name}.values", "expected a non-empty list")
    vals = tuple(float(v) for v in values)
    labels = spec.get("labels")
    if labels is None:
        return ActionSet.from_values(vals)
    return ActionSet(labels=tuple(str(s) for s in labels), values=vals)


def model_from_spec(spec: dict) -> GameModel:
    """Build a model from a JSON-style mapping with expression fields."""
    if not isinstance(spec, dict):
        raise ConfigurationError("model", "expected an object or a builtin name")
    d = spec.get("d")
    if d not in (1, 2):
        raise ConfigurationError("model.d", f"dimension must be 1 or 2, got {d!r}")
    xvars = ("x",) if d == 1 else ("x1", "x2")
    uvars = xvars + ("u1", "u2")

    drift_spec = spec.get("drift")
    if drift_spec is None:
        raise ConfigurationError("model.drift", "missing")
    drift_exprs = ([Expr(drift_spec, uvars)] if d == 1
                   else [Expr(s, uvars) for s in drift_spec])
    if len(drift_exprs) != d:
        raise ConfigurationError("model.drift", f"expected {d} components")

    diff_spec = spec.get("diffusion")
    if diff_spec is None:
        raise ConfigurationError("model.diffusion", "missing")
    if d == 1:
        diff_exprs = [[Expr(str(diff_spec), xvars)]]
    else:
        diff_exprs = [[Expr(str(e), xvars) for e in row] for row in diff_spec]
        if len(diff_exprs) != 2 or any(len(r) != 2 for r in diff_exprs):
            raise ConfigurationError("model.diffusion", "expected a 2x2 block")

    cost_spec = spec.get("cost")
    if cost_spec is None:
        raise ConfigurationError("model.cost", "missing")

    return GameModel(
        d=d,
        drift=_ExprDrift(drift_exprs, d),
        diffusion=_ExprDiffusion(diff_exprs, d),
        cost=_ExprCost(Expr(cost_spec, uvars), d),
        actions1=_actions_from_spec(spec.get("actions1"), "model.actions1"),
        actions2=_actions_from_spec(spec.get("actions2"), "model.actions2"),
        name=str(spec.get("name", "inline")),
    )


class _ExprLyap:
    def __init__(self, expr: Expr, d: int):
        self.expr = expr
        self.d = d

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        kw = ({"x": x[..., 0]} if self.d == 1
              else {"x1": x[..., 0], "x2": x[..., 1]})
        return np.broadcast_to(np.asarray(self.expr(**kw), dtype=float), x.shape[:-1])


def certificate_from_spec(spec: dict, d: int) -> LyapunovCertificate:
    if not isinstance(spec, dict):
        raise ConfigurationError("certificate", "expected an object")
    xvars = ("x",) if d == 1 else ("x1", "x2")
    kind = spec.get("kind")
    lyap = spec.get("lyap")
    if lyap is None:
        raise ConfigurationError("certificate.lyap", "missing")
    ell = spec.get("ell")
    return LyapunovCertificate(
        lyap=_ExprLyap(Expr(lyap, xvars), d),
        kind=str(kind),
        compact_radius=float(spec.get("compactRadius", 1.0)),
        beta=float(spec.get("beta", 1.0)),
        gamma=(float(spec["gamma"]) if "gamma" in spec else None),
        ell=(_ExprLyap(Expr(ell, xvars), d) if ell is not None else None),
        theta=(float(spec["theta"]) if "theta" in spec else None),
    )


# ---------------------------------------------------------------------------
# Built-in benchmark models
# ---------------------------------------------------------------------------

def _ou_drift(x, u1, u2):
    return -x


def _ou_cost(x, u1, u2):
    return 0.375 * x * x


def _exp_sq_quarter(x):
    return np.exp(0.25 * x * x)


def _ell_045_sq(x):
    return 0.45 * x * x


def _exp_half_sq(x):
    return np.exp(0.5 * x * x)


def _eg22_drift(x, u1, u2):
    # inward unit drift away from the origin, smoothed through zero
    return -np.tanh(5.0 * x)


def _eg22_cost(x, u1, u2):
    return 0.3 * (1.0 - np.exp(-np.abs(x)))


def _exp_abs_smoothed(x):
    # exp(|x|) outside the unit interval, C^1 continuation inside
    ax = np.abs(x)
    s = np.where(ax >= 1.0, ax, 0.5 * (x * x + 1.0))
    return np.exp(s)


def _eg23_drift(x, u1, u2):
    return -x * np.abs(x) + u2


def _eg23_cost(x, u1, u2):
    return (1.0 - np.exp(-x * x)) * (0.15 + 0.1 * u2)


def _eg23_lyap(x):
    g = np.sqrt(1.0 + x * x)
    return g / (1.0 + g)


def _eg25_drift(x, u1, u2):
    return -x + 0.5 * (u1 - u2)


def _eg25_cost(x, u1, u2):
    return x * x * (0.15 + 0.05 * u1 + 0.05 * u2)


def _ell_03_sq(x):
    return 0.3 * x * x


def _game1d_drift(x, u1, u2):
    return -2.0 * np.sign(x) * np.maximum(np.abs(x), 1.0) + u1 - u2


def _game1d_cost(x, u1, u2):
    return 0.3 * (1.0 - np.exp(-np.abs(x))) * (1.0 + u1 * (1.0 - u2))


class _Lyap1D:
    """Wraps a scalar 1-d candidate into the (..., d) contract."""

    def __init__(self, fn: Callable):
        self.fn = fn

    def __call__(self, x):
        return np.asarray(self.fn(np.asarray(x)[..., 0]), dtype=float)


_BINARY = ActionSet(labels=("off", "on"), values=(0.0, 1.0))


def builtin_names() -> list[str]:
    return ["ou-benchmark", "example-2.2", "example-2.3", "example-2.5", "game-1d"]


def builtin_model(name: str) -> GameModel:
    """Construct one of the shipped benchmark models by name."""
    if name == "ou-benchmark":
        return make_model_1d(_ou_drift, _ou_cost, name=name)
    if name == "example-2.2":
        return make_model_1d(_eg22_drift, _eg22_cost, name=name)
    if name == "example-2.3":
        return make_model_1d(
            _eg23_drift, _eg23_cost, name=name,
            actions2=ActionSet.from_values((0.0, 0.5, 1.0)))
    if name == "example-2.5":
        return make_model_1d(_eg25_drift, _eg25_cost, name=name,
                             actions1=_BINARY, actions2=_BINARY)
    if name == "game-1d":
        return make_model_1d(_game1d_drift, _game1d_cost, name=name,
                             actions1=_BINARY, actions2=_BINARY)
    raise ConfigurationError("model", f"unknown builtin model {name!r}")


def builtin_certificate(name: str, gamma: float | None = None) -> LyapunovCertificate:
    """The stability certificate shipped with a builtin model.

    `gamma` overrides the default decay rate for the bounded-cost kind.
    """
    if name == "ou-benchmark":
        return LyapunovCertificate(
            lyap=_Lyap1D(_exp_half_sq), kind="condition-2.2",
            compact_radius=3.5, beta=6.0, ell=_Lyap1D(_ell_045_sq), theta=0.84)
    if name == "example-2.2":
        return LyapunovCertificate(
            lyap=_Lyap1D(_exp_abs_smoothed), kind="condition-2.1",
            compact_radius=2.0, beta=10.0, gamma=0.4 if gamma is None else gamma)
    if name == "example-2.3":
        return LyapunovCertificate(
            lyap=_Lyap1D(_eg23_lyap), kind="condition-2.1",
            compact_radius=3.0, beta=2.0, gamma=0.5 if gamma is None else gamma)
    if name == "example-2.5":
        return LyapunovCertificate(
            lyap=_Lyap1D(_exp_sq_quarter), kind="condition-2.2",
            compact_radius=4.5, beta=6.0, ell=_Lyap1D(_ell_03_sq), theta=0.85)
    if name == "game-1d":
        return LyapunovCertificate(
            lyap=_Lyap1D(_exp_abs_smoothed), kind="condition-2.1",
            compact_radius=1.5, beta=8.0, gamma=0.7 if gamma is None else gamma)
    raise ConfigurationError("model", f"unknown builtin model {name!r}")


def with_gamma(cert: LyapunovCertificate, gamma: float) -> LyapunovCertificate:
    return replace(cert, gamma=gamma)
