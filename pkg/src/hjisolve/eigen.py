"""Principal (Perron) eigenpairs of assembled operators.

For a matrix A whose off-diagonal entries are nonnegative, A + sI with
s = 1 + max |diagonal| is an irreducible nonnegative matrix whenever the
grid graph is connected, so Perron-Frobenius applies: there is a unique
eigenvalue of maximal real part and it carries a strictly positive
eigenvector.  Any positive vector phi gives the Collatz-Wielandt bracket

    min_i (A phi)_i / phi_i  <=  lambda  <=  max_i (A phi)_i / phi_i,

used both as the convergence certificate and to place the shift for
inverse power iteration: solving (nu I - A) x = phi with nu strictly above
the upper bound makes nu I - A a nonsingular M-matrix, so x stays positive
and the iteration converges geometrically to the Perron direction.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import splu

from .errors import ConvergenceError, StructureError

__all__ = ["EigenPair", "principal_eigenpair", "cw_bounds"]


@dataclass(frozen=True)
class EigenPair:
    """Perron eigenpair with its Collatz-Wielandt bracket."""

    lambda_: float
    phi: np.ndarray      # strictly positive, phi[normalize index] == 1
    residual: float      # ||A phi - lambda phi||_inf / ||phi||_inf
    cw_lower: float
    cw_upper: float
    iterations: int


def cw_bounds(A: sp.spmatrix, phi: np.ndarray) -> tuple[float, float]:
    """Collatz-Wielandt bracket for the Perron root from a positive vector."""
    r = (A @ phi) / phi
    return float(r.min()), float(r.max())


def _as_matrix(A):
    """Accept a DiscreteOperator, sparse matrix, or dense array."""
    monotone = None
    if hasattr(A, "matrix"):
        monotone = getattr(A, "monotone", None)
        A = A.matrix
    if not sp.issparse(A):
        A = sp.csr_matrix(np.atleast_2d(np.asarray(A, dtype=float)))
    else:
        A = A.tocsr().astype(float)
    if A.shape[0] != A.shape[1]:
        raise StructureError(f"matrix must be square, got {A.shape}")
    if not np.all(np.isfinite(A.data)):
        raise StructureError("matrix has non-finite entries")
    return A, monotone


def principal_eigenpair(A, tol: float = 1e-10, max_iter: int = 500,
                        normalize_index: int | None = None,
                        override: bool = False) -> EigenPair:
    """Eigenvalue of maximal real part with its positive eigenvector.

    `A` may be a DiscreteOperator (its monotone flag is honored and the
    grid's origin slot is the normalization index) or any Metzler matrix.
    Pass override=True to attempt the solve on a non-monotone operator;
    the Perron structure is then not guaranteed and bounds lose certainty.
    Stops when the envelope width and the residual are both within tol.
    """
    if normalize_index is None and hasattr(A, "grid"):
        normalize_index = A.grid.origin_index
    A, monotone = _as_matrix(A)
    n = A.shape[0]
    if monotone is False and not override:
        raise StructureError(
            "operator is not monotone (negative off-diagonal entries); "
            "pass override=True to attempt the eigensolve anyway")
    if monotone is None and not override:
        off = A.copy()
        off.setdiag(0.0)
        if off.nnz and off.data.min() < -1e-12:
            raise StructureError(
                f"negative off-diagonal entry {off.data.min():.3e}; "
                "pass override=True to attempt the eigensolve anyway")

    ncomp, _ = connected_components(A, directed=True, connection="strong")
    if ncomp > 1:
        raise StructureError(
            f"operator graph splits into {ncomp} strongly connected components")

    if normalize_index is None:
        normalize_index = 0
    if not (0 <= normalize_index < n):
        raise StructureError(f"normalize index {normalize_index} out of range for n={n}")

    I = sp.identity(n, format="csr")
    phi = np.ones(n)
    lo = hi = lam = 0.0
    resid = np.inf
    for it in range(max_iter + 1):
        lo, hi = cw_bounds(A, phi)
        lam = 0.5 * (lo + hi)
        resid = float(np.max(np.abs(A @ phi - lam * phi)) / np.max(np.abs(phi)))
        if hi - lo <= tol and resid <= tol:
            phi = phi / phi[normalize_index]
            mn = float(phi.min())
            if not mn > 1e-300:
                raise StructureError(
                    f"eigenvector component underflowed to {mn:.3e}")
            if mn < 1e-12:
                warnings.warn(
                    f"eigenvector nearly vanishes at some nodes (min {mn:.3e}); "
                    "boundary decay is extreme", RuntimeWarning, stacklevel=2)
            return EigenPair(lambda_=lam, phi=phi, residual=resid,
                             cw_lower=lo, cw_upper=hi, iterations=it)
        if it == max_iter:
            break
        nu = hi + max(0.25 * (hi - lo), 1e-9 * max(1.0, abs(hi)))
        x = splu((nu * I - A).tocsc()).solve(phi)
        xmax = float(x.max())
        if not (np.all(np.isfinite(x)) and xmax > 0):
            raise StructureError("inverse iteration produced a non-positive iterate")
        phi = np.maximum(x, xmax * 1e-290) / xmax
    raise ConvergenceError(
        f"eigensolve did not reach tol={tol} in {max_iter} iterations "
        f"(envelope width {hi - lo:.3e}, residual {resid:.3e})",
        value=lam, lower=lo, upper=hi, residual=resid, iterations=max_iter)
