"""Shared fixtures.  The expensive solves are session-scoped so the unit
tests and the acceptance suite reuse one sweep per model."""

from __future__ import annotations

import time

import numpy as np
import pytest

import hjisolve as hj

RADII = [2.0, 3.0, 4.0, 5.0, 6.0]


@pytest.fixture(scope="session")
def ou_model():
    return hj.builtin_model("ou-benchmark")


@pytest.fixture(scope="session")
def game_model():
    return hj.builtin_model("game-1d")


def _timed_sweep(model, radii, h):
    t0 = time.perf_counter()
    report = hj.radius_sweep(model, radii, h, tol=1e-9)
    return {"report": report, "seconds": time.perf_counter() - t0}


@pytest.fixture(scope="session")
def ou_sweep(ou_model):
    return _timed_sweep(ou_model, RADII, 0.01)


@pytest.fixture(scope="session")
def game_sweep(game_model):
    return _timed_sweep(game_model, RADII, 0.01)


@pytest.fixture(scope="session")
def game_solve(game_sweep):
    return game_sweep["report"].final


@pytest.fixture(scope="session")
def example_sweeps(ou_sweep, game_sweep):
    """Radius sweeps for every shipped model, at the reference resolutions."""
    out = {
        "ou-benchmark": ou_sweep["report"],
        "game-1d": game_sweep["report"],
    }
    for name in ("example-2.2", "example-2.3", "example-2.5"):
        out[name] = hj.radius_sweep(hj.builtin_model(name), RADII, 0.02, tol=1e-9)
    return out


@pytest.fixture(scope="session")
def tiny_grid():
    return hj.build_grid(1, 1.0, 0.5)


@pytest.fixture(scope="session")
def game_tiny_solve(game_model, tiny_grid):
    return hj.dirichlet_isaacs(game_model, tiny_grid, tol=1e-9)


@pytest.fixture(scope="session")
def game_oracle(game_model, tiny_grid):
    return hj.enumerate_strategies(game_model, tiny_grid, 4)


@pytest.fixture(scope="session")
def max_probed_cost():
    """Max running cost over pure pairs on each model's largest solve box."""

    def probe(model: hj.GameModel, radius: float, h: float) -> float:
        grid = hj.build_grid(model.d, radius, h)
        pts = grid.interior_points()
        worst = -np.inf
        for _, _, u1, u2 in model.pure_pairs():
            worst = max(worst, float(np.max(model.cost(pts, u1, u2))))
        return worst

    return probe
