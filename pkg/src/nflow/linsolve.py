"""Conjugate-gradient wrapper shared by the implicit sub-steps."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg

from .errors import SolverDiverged


def identity_minus(grid_lap: sp.csr_matrix, coeff: float) -> sp.csr_matrix:
    """``I - coeff * lap`` as CSR."""
    n = grid_lap.shape[0]
    return (sp.identity(n, format="csr") - coeff * grid_lap).tocsr()


def solve_spd(A: sp.csr_matrix, b: np.ndarray, rtol: float, *, keep_mean: bool = False, maxiter: int | None = None) -> np.ndarray:
    """Solve ``A x = b`` by CG to ``||r|| <= rtol ||b||``.

    With ``keep_mean`` the operator must map constants to themselves (as
    ``I - c * lap`` with Neumann closure does); the constant part of ``b`` is
    then passed through untouched and only the mean-free part is iterated,
    so ``sum(x) == sum(b)`` up to rounding rather than up to ``rtol``.
    """
    b = np.asarray(b, dtype=float)
    if not np.all(np.isfinite(b)):
        raise SolverDiverged("right-hand side is not finite")
    if np.all(b == b.flat[0]):
        if keep_mean:
            return b.copy()
        if b.flat[0] == 0.0:
            return np.zeros_like(b)
    flat = b.ravel()
    mean = flat.mean() if keep_mean else 0.0
    rhs = flat - mean
    scale = np.linalg.norm(rhs)
    if scale == 0.0:
        x = np.zeros_like(rhs)
    else:
        x, info = cg(A, rhs, x0=np.zeros_like(rhs), rtol=rtol, atol=0.0, maxiter=maxiter or 10 * rhs.size)
        if info != 0:
            raise SolverDiverged(f"conjugate gradients stopped without converging (info={info})")
        if not np.all(np.isfinite(x)):
            raise SolverDiverged("conjugate gradients produced non-finite values")
        if keep_mean:
            x = x - x.mean()
    return (x + mean).reshape(b.shape)
