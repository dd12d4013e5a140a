"""Exact solves of finite zero-sum matrix games.

Convention: rows belong to player 1 (the minimiser), columns to player 2
(the maximiser).  The value is min over row mixtures of the max over column
mixtures of p^T H q, which equals the max-min by LP duality.

Solution path: a pure saddle point is returned when one exists; otherwise
support enumeration (square supports, which always contain a basic optimal
solution) when the smaller side has at most four actions; otherwise a dense
primal simplex on the standard game LP after shifting the payoff positive.
All tie-breaking is deterministic: first hit in lexicographic order, Bland's
rule in the simplex.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import InvalidGameError

__all__ = ["MatrixGame", "GameSolution", "solve_game"]

SUPPORT_LIMIT = 4  # support enumeration only when min(m, n) <= this


@dataclass(frozen=True)
class MatrixGame:
    """A payoff matrix; entry [i, j] is what row i pays when column j is played."""

    payoff: np.ndarray
    bilinear: bool = True

    def __post_init__(self):
        H = np.asarray(self.payoff, dtype=float)
        if H.ndim != 2 or H.size == 0:
            raise InvalidGameError(f"payoff must be a non-empty matrix, got shape {H.shape}")
        if not np.all(np.isfinite(H)):
            raise InvalidGameError("payoff contains non-finite entries")
        object.__setattr__(self, "payoff", H)


@dataclass
class GameSolution:
    value: float
    p: np.ndarray      # minimiser's mixture over rows
    q: np.ndarray      # maximiser's mixture over columns
    gap: float         # certified duality gap from the returned mixtures
    method: str        # "pure" | "support" | "simplex"


def _certificates(H: np.ndarray, p: np.ndarray, q: np.ndarray):
    """Guarantees implied by the mixtures: the minimiser pays at most
    `upper` playing p, the maximiser receives at least `lower` playing q."""
    upper = float((p @ H).max())
    lower = float((H @ q).min())
    return lower, upper


def _clean(w: np.ndarray) -> np.ndarray:
    w = np.where(w < 0, 0.0, w)
    return w / w.sum()


def _pure_saddle(H: np.ndarray):
    col_min = H.min(axis=0)
    row_max = H.max(axis=1)
    hit = (H <= col_min[None, :]) & (H >= row_max[:, None])
    idx = np.argwhere(hit)
    if idx.size == 0:
        return None
    i, j = idx[0]  # argwhere is row-major, so this is the lexicographic first
    m, n = H.shape
    p = np.zeros(m)
    q = np.zeros(n)
    p[i] = 1.0
    q[j] = 1.0
    return GameSolution(value=float(H[i, j]), p=p, q=q, gap=0.0, method="pure")


def _support_solution(H: np.ndarray):
    m, n = H.shape
    scale = max(1.0, float(np.abs(H).max()))
    ftol = 1e-9 * scale
    for k in range(1, min(m, n) + 1):
        for rows in combinations(range(m), k):
            Hr = H[list(rows), :]
            for cols in combinations(range(n), k):
                sub = Hr[:, list(cols)]
                # indifference for q: every supported row pays v against q
                A = np.zeros((k + 1, k + 1))
                A[:k, :k] = sub
                A[:k, k] = -1.0
                A[k, :k] = 1.0
                rhs = np.zeros(k + 1)
                rhs[k] = 1.0
                try:
                    solq = np.linalg.solve(A, rhs)
                except np.linalg.LinAlgError:
                    continue
                # indifference for p: every supported column receives w
                A[:k, :k] = sub.T
                try:
                    solp = np.linalg.solve(A, rhs)
                except np.linalg.LinAlgError:
                    continue
                qs, v = solq[:k], solq[k]
                ps, w = solp[:k], solp[k]
                if abs(v - w) > ftol:
                    continue
                if qs.min() < -ftol or ps.min() < -ftol:
                    continue
                p = np.zeros(m)
                q = np.zeros(n)
                p[list(rows)] = ps
                q[list(cols)] = qs
                p, q = _clean(p), _clean(q)
                lower, upper = _certificates(H, p, q)
                # unsupported rows must pay at least v, columns at most v
                if lower < v - ftol or upper > v + ftol:
                    continue
                return GameSolution(value=float(0.5 * (v + w)), p=p, q=q,
                                    gap=abs(upper - lower), method="support")
    return None


def _simplex_max(A: np.ndarray, b: np.ndarray, c: np.ndarray):
    """max c^T x  s.t.  A x <= b, x >= 0, with b >= 0 so the slack basis is
    feasible.  Bland's rule throughout; returns (x, duals)."""
    m, n = A.shape
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = b
    T[m, :n] = -c
    basis = list(range(n, n + m))
    for _ in range(200 * (m + n)):
        enter = -1
        for j in range(n + m):
            if T[m, j] < -1e-12:
                enter = j
                break
        if enter < 0:
            break
        leave = -1
        best = np.inf
        for i in range(m):
            aij = T[i, enter]
            if aij > 1e-12:
                ratio = T[i, -1] / aij
                if (ratio < best - 1e-15
                        or (abs(ratio - best) <= 1e-15
                            and (leave < 0 or basis[i] < basis[leave]))):
                    best = ratio
                    leave = i
        if leave < 0:
            raise InvalidGameError("game LP is unbounded; payoff shift failed")
        piv = T[leave, enter]
        T[leave] /= piv
        col = T[:, enter].copy()
        for i in range(m + 1):
            if i != leave and col[i] != 0.0:
                T[i] -= col[i] * T[leave]
        basis[leave] = enter
    else:
        raise InvalidGameError("simplex failed to terminate")
    x = np.zeros(n)
    for i, bv in enumerate(basis):
        if bv < n:
            x[bv] = T[i, -1]
    duals = T[m, n:n + m].copy()
    return x, duals


def _lp_solution(H: np.ndarray):
    m, n = H.shape
    kappa = 1.0 - float(H.min())
    Hs = H + kappa  # entries >= 1, so the shifted value is positive
    x, y = _simplex_max(Hs.T, np.ones(n), np.ones(m))
    total = float(x.sum())
    if total <= 0:
        raise InvalidGameError("degenerate game LP solution")
    vshift = 1.0 / total
    p = _clean(x * vshift)
    q = _clean(y * vshift)
    lower, upper = _certificates(H, p, q)
    return GameSolution(value=float(0.5 * (lower + upper)), p=p, q=q,
                        gap=abs(upper - lower), method="simplex")


def solve_game(game) -> GameSolution:
    """Solve a zero-sum matrix game exactly (to numerical working precision).

    Accepts a MatrixGame or a raw matrix.  The returned mixtures certify the
    value: max_j (p^T H)_j and min_i (H q)_i enclose it within `gap`.
    """
    H = game.payoff if isinstance(game, MatrixGame) else MatrixGame(np.asarray(game)).payoff
    sol = _pure_saddle(H)
    if sol is not None:
        return sol
    if min(H.shape) <= SUPPORT_LIMIT:
        sol = _support_solution(H)
        if sol is not None:
            return sol
    return _lp_solution(H)
