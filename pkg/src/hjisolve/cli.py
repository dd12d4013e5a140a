"""Batch front door: config-driven check/solve/sweep/verify/oracle pipelines.

Configs are JSON; results land in an output directory as run.json plus CSV
field data.  Numeric CSV content is written with 17 significant digits so a
rerun with the same config and seed reproduces files byte for byte.

Exit codes: 0 success, 1 configuration error, 2 solver failure,
3 verification violation, 4 oracle certification failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import asdict

import numpy as np

from .discretize import Grid, build_grid
from .errors import ConfigurationError, ConvergenceError, HJIError
from .isaacs import StrategyField, dirichlet_isaacs, radius_sweep
from .model import (
    GameModel,
    builtin_certificate,
    builtin_model,
    builtin_names,
    certificate_from_spec,
    check_assumptions,
    check_condition,
    model_from_spec,
)
from .montecarlo import (
    SimConfig,
    check_representation,
    estimate_growth_rate,
    estimate_horizon_trend,
    late_window,
    make_deviations,
    verify_saddle,
)
from .oracle import certify, enumerate_strategies, export_tensor

__all__ = ["main", "load_config", "validate_config", "load_sweep_outputs"]

_EXIT_OK = 0
_EXIT_CONFIG = 1
_EXIT_SOLVER = 2
_EXIT_VERIFY = 3
_EXIT_ORACLE = 4


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, float) and not np.isfinite(obj):
        return repr(obj)
    return obj


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

_DEFAULTS = {
    "grid": {"radiusList": [2.0, 3.0, 4.0], "h": 0.05},
    "solver": {"tol": 1e-9, "maxOuter": 80, "damping": 0.5},
    "mc": {"x0": [1.0], "T": 20.0, "dt": 1e-3, "paths": 100_000, "seed": 7},
    "verify": {"deviations": 10, "ballRadius": 1.0, "startPoints": None,
               "horizons": [5.0, 10.0, 20.0]},
    "oracle": {"enabled": True, "meshSteps": 4, "radius": 1.0, "h": 0.5,
               "slack": None},
    "output": "runs/out",
}


def load_config(path_or_name: str) -> dict:
    """Read a config file, or a packaged reference config by builtin name."""
    if os.path.exists(path_or_name):
        with open(path_or_name) as fh:
            try:
                return json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigurationError("config", f"invalid JSON: {exc}") from exc
    if path_or_name in builtin_names():
        from importlib.resources import files

        ref = files("hjisolve").joinpath(f"configs/{path_or_name}.json")
        return json.loads(ref.read_text())
    raise ConfigurationError(
        "config", f"no such file or reference config: {path_or_name!r}")


def _require(cond: bool, field: str, message: str):
    if not cond:
        raise ConfigurationError(field, message)


def _positive_number(v, field: str) -> float:
    _require(isinstance(v, (int, float)) and not isinstance(v, bool), field,
             f"expected a number, got {v!r}")
    _require(np.isfinite(v) and v > 0, field, f"must be positive, got {v!r}")
    return float(v)


def validate_config(raw: dict) -> dict:
    """Schema-validate and normalize a run configuration."""
    _require(isinstance(raw, dict), "config", "top level must be an object")
    known = {"model", "grid", "solver", "mc", "verify", "oracle", "output"}
    for key in raw:
        _require(key in known, key, "unknown field")
    _require("model" in raw, "model", "missing (builtin name or inline definition)")
    model = raw["model"]
    _require(isinstance(model, (str, dict)), "model",
             "must be a builtin name or an object")

    cfg = {"model": model}
    for section, defaults in _DEFAULTS.items():
        if section in ("output",):
            continue
        given = raw.get(section, {})
        _require(isinstance(given, dict), section, "must be an object")
        for key in given:
            _require(key in defaults, f"{section}.{key}", "unknown field")
        merged = {**defaults, **given}
        cfg[section] = merged
    cfg["output"] = raw.get("output", _DEFAULTS["output"])
    _require(isinstance(cfg["output"], str) and cfg["output"], "output",
             "must be a nonempty path")

    g = cfg["grid"]
    _require(isinstance(g["radiusList"], list) and g["radiusList"],
             "grid.radiusList", "must be a nonempty list")
    radii = [_positive_number(r, "grid.radiusList") for r in g["radiusList"]]
    _require(all(b > a for a, b in zip(radii, radii[1:])), "grid.radiusList",
             "radii must be strictly increasing")
    g["radiusList"] = radii
    g["h"] = _positive_number(g["h"], "grid.h")

    s = cfg["solver"]
    s["tol"] = _positive_number(s["tol"], "solver.tol")
    _require(isinstance(s["maxOuter"], int) and s["maxOuter"] >= 1,
             "solver.maxOuter", "must be a positive integer")
    s["damping"] = _positive_number(s["damping"], "solver.damping")
    _require(s["damping"] < 1, "solver.damping", "must be below 1")

    m = cfg["mc"]
    x0 = m["x0"] if isinstance(m["x0"], list) else [m["x0"]]
    _require(all(isinstance(v, (int, float)) for v in x0), "mc.x0",
             "must be a number or list of numbers")
    m["x0"] = [float(v) for v in x0]
    m["T"] = _positive_number(m["T"], "mc.T")
    m["dt"] = _positive_number(m["dt"], "mc.dt")
    _require(isinstance(m["paths"], int) and m["paths"] >= 100, "mc.paths",
             "must be an integer of at least 100")
    _require(isinstance(m["seed"], int) and m["seed"] >= 0, "mc.seed",
             "must be a nonnegative integer")

    v = cfg["verify"]
    _require(isinstance(v["deviations"], int) and v["deviations"] >= 0,
             "verify.deviations", "must be a nonnegative integer")
    v["ballRadius"] = _positive_number(v["ballRadius"], "verify.ballRadius")
    if v["startPoints"] is not None:
        _require(isinstance(v["startPoints"], list) and v["startPoints"],
                 "verify.startPoints", "must be a nonempty list of points")
        v["startPoints"] = [[float(c) for c in np.atleast_1d(p)] for p in v["startPoints"]]
    hz = v["horizons"]
    _require(isinstance(hz, list) and len(hz) >= 1, "verify.horizons",
             "must be a list of horizons")
    v["horizons"] = [_positive_number(t, "verify.horizons") for t in hz]

    o = cfg["oracle"]
    _require(isinstance(o["enabled"], bool), "oracle.enabled", "must be true or false")
    _require(isinstance(o["meshSteps"], int) and o["meshSteps"] >= 1,
             "oracle.meshSteps", "must be a positive integer")
    o["radius"] = _positive_number(o["radius"], "oracle.radius")
    o["h"] = _positive_number(o["h"], "oracle.h")
    if o["slack"] is not None:
        o["slack"] = _positive_number(o["slack"], "oracle.slack")
    return cfg


def _model_from_config(cfg: dict) -> GameModel:
    spec = cfg["model"]
    if isinstance(spec, str):
        return builtin_model(spec)
    return model_from_spec(spec)


def _certificate_from_config(cfg: dict, model: GameModel):
    spec = cfg["model"]
    if isinstance(spec, str):
        return builtin_certificate(spec)
    if "lyapunov" in spec:
        return certificate_from_spec(spec["lyapunov"], model.d)
    return None


# ---------------------------------------------------------------------------
# CSV field serialization
# ---------------------------------------------------------------------------

def _coord_header(d: int) -> list[str]:
    return ["x"] if d == 1 else ["x1", "x2"]


def _write_value_csv(path: str, grid: Grid, V: np.ndarray):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_coord_header(grid.d) + ["V"])
        for pt, val in zip(grid.interior_points(), V):
            w.writerow([_fmt(c) for c in pt] + [_fmt(val)])


def _write_strategy_csv(path: str, f: StrategyField):
    grid = f.grid
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_coord_header(grid.d) + list(f.actions.labels))
        for pt, row in zip(grid.interior_points(), f.weights):
            w.writerow([_fmt(c) for c in pt] + [_fmt(v) for v in row])


def _write_sweep_csv(path: str, radii, lambdas):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["radius", "lambda"])
        for r, lam in zip(radii, lambdas):
            w.writerow([_fmt(r), _fmt(lam)])


def _read_rows(path: str) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ConfigurationError("output", f"{path} is empty")
    header, data = rows[0], rows[1:]
    return header, np.array([[float(v) for v in row] for row in data])


def load_sweep_outputs(outdir: str, model: GameModel):
    """Reload a sweep's grid, value field, strategies, and eigenvalue data."""
    run_path = os.path.join(outdir, "run.json")
    if not os.path.exists(run_path):
        raise ConfigurationError("output", f"no run.json under {outdir}; run sweep first")
    with open(run_path) as fh:
        run = json.load(fh)
    sweep = run.get("sweep")
    if not sweep:
        raise ConfigurationError("output", "run.json has no sweep section; run sweep first")
    grid = build_grid(model.d, sweep["final"]["radius"], sweep["final"]["h"])

    header, data = _read_rows(os.path.join(outdir, "value_function.csv"))
    if data.shape != (grid.n_interior, grid.d + 1):
        raise ConfigurationError("output", "value_function.csv does not match the grid")
    if not np.array_equal(data[:, :grid.d], grid.interior_points()):
        raise ConfigurationError("output", "value_function.csv coordinates differ from the grid")
    V = data[:, -1]

    fields = []
    for name, actions in (("strategy_p1.csv", model.actions1),
                          ("strategy_p2.csv", model.actions2)):
        header, data = _read_rows(os.path.join(outdir, name))
        if tuple(header[grid.d:]) != actions.labels:
            raise ConfigurationError("output", f"{name} action labels differ from the model")
        fields.append(StrategyField(grid=grid, actions=actions,
                                    weights=data[:, grid.d:]))
    return grid, V, fields[0], fields[1], run


# ---------------------------------------------------------------------------
# Pipeline stages
# ---------------------------------------------------------------------------

def _stage_check(cfg: dict, model: GameModel) -> tuple[dict, int]:
    probe_radius = max(10.0, max(cfg["grid"]["radiusList"]))
    probe_h = 0.01 if model.d == 1 else 0.1
    probe = build_grid(model.d, probe_radius, probe_h)
    assumptions = check_assumptions(model, probe)
    fragment = {
        "assumptions": {
            "growth_constant": assumptions.growth_constant,
            "degenerate_bands": assumptions.degenerate_bands,
            "bands": assumptions.bands,
            "notes": assumptions.notes,
        }
    }
    cert = _certificate_from_config(cfg, model)
    if cert is None:
        fragment["condition"] = {"skipped": "no certificate configured"}
    else:
        report = check_condition(model, cert, probe)
        fragment["condition"] = {
            "kind": report.kind,
            "passed": report.passed,
            "worst_margin": report.worst_margin,
            "violations": len(report.violations),
            "cost_check": report.cost_check,
            "inf_compact_ok": report.inf_compact_ok,
            "notes": report.notes,
        }
    return _jsonable(fragment), _EXIT_OK


def _solve_fragment(solve) -> dict:
    return {
        "lambda": solve.lambda_,
        "radius": solve.grid.radius,
        "h": solve.grid.h,
        "iterations": solve.iterations,
        "selector_changes": solve.selector_changes,
        "hamiltonian_residual": solve.hamiltonian_residual,
        "eigen_residual": solve.eigen.residual,
        "cw_lower": solve.eigen.cw_lower,
        "cw_upper": solve.eigen.cw_upper,
        "converged": solve.converged,
        "monotone": solve.monotone,
        "peclet_margin": solve.peclet_margin,
        "upwind_fraction": solve.upwind_fraction,
        "damping_events": solve.damping_events,
    }


def _stage_solve(cfg: dict, model: GameModel, outdir: str) -> tuple[dict, int]:
    g = cfg["grid"]
    s = cfg["solver"]
    grid = build_grid(model.d, g["radiusList"][-1], g["h"])
    solve = dirichlet_isaacs(model, grid, tol=s["tol"], max_outer=s["maxOuter"],
                             damping=s["damping"])
    _write_value_csv(os.path.join(outdir, "value_function.csv"), grid, solve.eigen.phi)
    _write_strategy_csv(os.path.join(outdir, "strategy_p1.csv"), solve.v1)
    _write_strategy_csv(os.path.join(outdir, "strategy_p2.csv"), solve.v2)
    return _jsonable(_solve_fragment(solve)), _EXIT_OK


def _stage_sweep(cfg: dict, model: GameModel, outdir: str) -> tuple[dict, int]:
    g = cfg["grid"]
    s = cfg["solver"]
    report = radius_sweep(model, g["radiusList"], g["h"], tol=s["tol"],
                          max_outer=s["maxOuter"], damping=s["damping"])
    _write_sweep_csv(os.path.join(outdir, "lambda_sweep.csv"),
                     report.radii, report.lambdas)
    final = report.final
    _write_value_csv(os.path.join(outdir, "value_function.csv"),
                     final.grid, final.eigen.phi)
    _write_strategy_csv(os.path.join(outdir, "strategy_p1.csv"), final.v1)
    _write_strategy_csv(os.path.join(outdir, "strategy_p2.csv"), final.v2)
    fragment = {
        "radii": report.radii,
        "lambdas": report.lambdas,
        "converged": report.converged,
        "extrapolated": report.extrapolated,
        "warnings": report.warnings,
        "final": _solve_fragment(final),
    }
    return _jsonable(fragment), _EXIT_OK


def _estimate_fragment(est) -> dict:
    out = {
        "value": est.value, "stderr": est.stderr,
        "effective_tail": est.effective_tail, "unreliable": est.unreliable,
        "n_paths": est.n_paths, "diverged_fraction": est.diverged_fraction,
        "clamped_fraction": est.clamped_fraction,
    }
    if hasattr(est, "t_lo"):
        out["t_lo"], out["t_hi"] = est.t_lo, est.t_hi
    return out


def _default_starts(x0: list[float]) -> list[list[float]]:
    x0 = list(x0)
    alt = [[v / 2 for v in x0], [-v for v in x0]]
    starts = [x0] + [a for a in alt if a != x0]
    while len(starts) < 3:
        starts.append([v + len(starts) * 0.5 for v in x0])
    return starts[:3]


def _stage_verify(cfg: dict, model: GameModel, outdir: str,
                  workers: int) -> tuple[dict, int]:
    grid, V, v1, v2, run = load_sweep_outputs(outdir, model)
    lambda_hat = float(run["sweep"]["extrapolated"])
    vc = cfg["verify"]
    mc = cfg["mc"]
    base_cfg = SimConfig(x0=tuple(mc["x0"]), T=mc["T"], dt=mc["dt"],
                         paths=mc["paths"], seed=mc["seed"])

    count = vc["deviations"]
    dev1 = make_deviations(v1, count, seed=mc["seed"] + 1)
    dev2 = make_deviations(v2, count, seed=mc["seed"] + 2)
    report = verify_saddle(model, v1, v2, lambda_hat, (dev1, dev2), base_cfg,
                           workers=workers)

    starts = vc["startPoints"] or _default_starts(mc["x0"])
    window = late_window(base_cfg)
    independents = []
    for p in starts:
        cfg_p = SimConfig(x0=tuple(p), T=mc["T"], dt=mc["dt"],
                          paths=mc["paths"], seed=mc["seed"])
        independents.append((p, estimate_growth_rate(model, v1, v2, cfg_p,
                                                     t_pair=window,
                                                     workers=workers)))
    indep_ok = True
    for i in range(len(independents)):
        for j in range(i + 1, len(independents)):
            _, ei = independents[i]
            _, ej = independents[j]
            joint = np.hypot(ei.stderr, ej.stderr)
            if abs(ei.value - ej.value) > 3 * joint:
                indep_ok = False

    rep = check_representation(model, V, lambda_hat, v1, v2, vc["ballRadius"],
                               base_cfg, workers=workers)
    rep_ok = rep.inconclusive or rep.relative_error < 0.05

    trend = estimate_horizon_trend(model, v1, v2, base_cfg,
                                   horizons=tuple(vc["horizons"]), workers=workers)

    fragment = {
        "lambda_hat": lambda_hat,
        "saddle": {
            "passed": report.passed,
            "center": _estimate_fragment(report.center),
            "center_ok": report.center_ok,
            "outcomes": [asdict(o) for o in report.outcomes],
            "notes": report.notes,
        },
        "value_independence": {
            "passed": indep_ok,
            "estimates": [{"x0": p, **_estimate_fragment(e)} for p, e in independents],
        },
        "representation": {
            "relative_error": rep.relative_error, "lhs": rep.lhs, "rhs": rep.rhs,
            "n_hit": rep.n_hit, "capped_fraction": rep.capped_fraction,
            "diverged_fraction": rep.diverged_fraction,
            "inconclusive": rep.inconclusive, "note": rep.note, "passed": rep_ok,
        },
        "horizon_trend": [{"T": t, **_estimate_fragment(e)} for t, e in trend],
    }
    passed = report.passed and indep_ok and rep_ok
    with open(os.path.join(outdir, "mc_report.json"), "w") as fh:
        json.dump(_jsonable(fragment), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return _jsonable(fragment), (_EXIT_OK if passed else _EXIT_VERIFY)


def _stage_oracle(cfg: dict, model: GameModel, outdir: str) -> tuple[dict, int]:
    o = cfg["oracle"]
    s = cfg["solver"]
    if not o["enabled"]:
        return {"skipped": "disabled in config"}, _EXIT_OK
    tiny = build_grid(model.d, o["radius"], o["h"])
    solve = dirichlet_isaacs(model, tiny, tol=s["tol"], max_outer=s["maxOuter"],
                             damping=s["damping"])
    result = enumerate_strategies(model, tiny, o["meshSteps"])
    report = certify(solve, result, slack=o["slack"])
    export_tensor(result, os.path.join(outdir, "oracle_tensor.csv"))
    fragment = {
        "lambda": solve.lambda_,
        "mesh_steps": result.mesh_steps,
        "pure_max_min": result.pure_max_min,
        "pure_min_max": result.pure_min_max,
        "mesh_max_min": result.mesh_max_min,
        "mesh_min_max": result.mesh_min_max,
        "slack": report.slack,
        "slack_estimate": result.slack_estimate,
        "n_eigensolves": result.n_eigensolves,
        "certified": report.passed,
        "note": report.note,
    }
    return _jsonable(fragment), (_EXIT_OK if report.passed else _EXIT_ORACLE)


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def _dump_report(outdir: str, report: dict):
    with open(os.path.join(outdir, "run.json"), "w") as fh:
        json.dump(_jsonable(report), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _resolve_workers(flag: int | None) -> int:
    if flag is None:
        env = os.environ.get("HJI_WORKERS")
        if env is not None:
            try:
                flag = int(env)
            except ValueError as exc:
                raise ConfigurationError("workers", f"HJI_WORKERS={env!r} is not an integer") from exc
        else:
            flag = os.cpu_count() or 1
    if flag < 1:
        raise ConfigurationError("workers", f"worker count must be positive, got {flag}")
    return flag


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hjisolve",
        description="Solve, sweep, and verify risk-sensitive stochastic "
                    "differential games on truncated domains.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, doc in (
            ("check", "run model assumption and stability-certificate checks"),
            ("solve", "solve on the largest configured radius"),
            ("sweep", "solve across all configured radii and extrapolate"),
            ("verify", "Monte Carlo verification against a prior sweep output"),
            ("oracle", "brute-force enumeration certificate on a tiny grid"),
            ("all", "check, sweep, verify, and oracle in sequence")):
        p = sub.add_parser(name, help=doc)
        p.add_argument("--config", required=True,
                       help="config file path or builtin reference config name")
        p.add_argument("--workers", type=int, default=None,
                       help="parallel workers (default: HJI_WORKERS or logical cores)")
        p.add_argument("--seed", type=int, default=None,
                       help="override the Monte Carlo seed")
        p.add_argument("--out", default=None, help="override the output directory")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    report: dict = {"command": args.command}
    outdir = None
    try:
        cfg = validate_config(load_config(args.config))
        if args.seed is not None:
            cfg["mc"]["seed"] = args.seed
        if args.out is not None:
            cfg["output"] = args.out
        workers = _resolve_workers(args.workers)
        outdir = cfg["output"]
        os.makedirs(outdir, exist_ok=True)
        model = _model_from_config(cfg)
        # carry over earlier stage results so a later `verify` can reload the
        # sweep it depends on, and reruns stay idempotent
        run_path = os.path.join(outdir, "run.json")
        if os.path.exists(run_path):
            try:
                with open(run_path) as fh:
                    prior = json.load(fh)
            except (OSError, json.JSONDecodeError):
                prior = {}
            for key, value in prior.items():
                if key not in ("command", "error", "exit_code"):
                    report.setdefault(key, value)
        report["command"] = args.command
        report["config"] = _jsonable(cfg)
        report["model"] = {
            "name": model.name or "inline", "d": model.d,
            "actions1": list(model.actions1.labels),
            "actions2": list(model.actions2.labels),
        }
        report["workers"] = workers

        code = _EXIT_OK
        stages = {"check": ("check",), "solve": ("solve",), "sweep": ("sweep",),
                  "verify": ("verify",), "oracle": ("oracle",),
                  "all": ("check", "sweep", "verify", "oracle")}[args.command]
        for stage in stages:
            if stage == "check":
                frag, rc = _stage_check(cfg, model)
            elif stage == "solve":
                frag, rc = _stage_solve(cfg, model, outdir)
            elif stage == "sweep":
                frag, rc = _stage_sweep(cfg, model, outdir)
            elif stage == "verify":
                frag, rc = _stage_verify(cfg, model, outdir, workers)
            else:
                frag, rc = _stage_oracle(cfg, model, outdir)
            report[stage] = frag
            if code == _EXIT_OK:
                code = rc
            # flush after every stage so later stages (and reruns) can
            # reload prior results from disk
            _dump_report(outdir, report)
    except ConfigurationError as exc:
        report["error"] = {"type": "configuration", "field": exc.field,
                           "message": str(exc)}
        print(f"error: {exc}", file=sys.stderr)
        code = _EXIT_CONFIG
    except ConvergenceError as exc:
        report["error"] = {"type": "convergence", "message": str(exc)}
        print(f"error: {exc}", file=sys.stderr)
        code = _EXIT_SOLVER
    except HJIError as exc:
        report["error"] = {"type": type(exc).__name__, "message": str(exc)}
        print(f"error: {exc}", file=sys.stderr)
        code = _EXIT_SOLVER
    report["exit_code"] = code
    if outdir is not None:
        _dump_report(outdir, report)
    return code


if __name__ == "__main__":
    sys.exit(main())
