"""Galerkin momentum equation on a discrete Lamé eigenbasis.

The velocity is kept in the span of the ``n`` lowest eigenvectors of the
discrete Lamé operator ``L = -mu lap_D - (mu + lambda) grad_N div_D`` with
zero boundary values.  One time step solves the weighted mass system
``M(rho_new) c_new = M(rho_old) c_old + dt P(rhs)`` inside a Picard loop
that also re-runs the continuity and director sub-steps.
"""

from __future__ import annotations

import hashlib
import os
import struct
from dataclasses import dataclass, field
from functools import reduce
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackError, ArpackNoConvergence, eigsh

from . import domain as dm
from .director import Cutoff, director_step
from .domain import Boundary, Grid, ScalarField, VectorField
from .errors import (
    CflViolated,
    EigensolverFailed,
    GridMismatch,
    NonPositiveDensity,
    NTooLarge,
    PicardDiverged,
    SingularMass,
)
from .model import FlowState, InitialData, PhysParams, RegParams
from .transport import continuity_step

ODD = Boundary.DIRICHLET_ZERO.ghost_sign
EVEN = Boundary.NEUMANN.ghost_sign


@dataclass(frozen=True, eq=False)
class LameBasis:
    grid: Grid
    mu: float
    lam: float
    eigenvalues: np.ndarray
    modes: np.ndarray  # (n, dim, *counts), L2-orthonormal

    @property
    def n(self) -> int:
        return len(self.eigenvalues)

    @property
    def flat(self) -> np.ndarray:
        return self.modes.reshape(self.n, -1)

    def mode(self, a: int) -> VectorField:
        return VectorField(self.grid, self.modes[a], Boundary.DIRICHLET_ZERO)


def lame_matrix(grid: Grid, mu: float, lam: float) -> sp.csr_matrix:
    """Symmetric positive definite Lamé matrix on the stacked components."""
    lap = dm.laplacian_matrix(grid, Boundary.DIRICHLET_ZERO)
    div = sp.hstack([dm.central_matrix(grid, k, Boundary.DIRICHLET_ZERO) for k in range(grid.dim)])
    block = sp.block_diag([lap] * grid.dim)
    return (-mu * block + (mu + lam) * (div.T @ div)).tocsr()


def lame_apply(grid: Grid, mu: float, lam: float, w: np.ndarray) -> np.ndarray:
    """``L w`` by stencils; ``w`` has shape ``(dim, *counts)``."""
    div = dm.div_array(w, grid, ODD)
    grad_div = dm.grad_array(div, grid, EVEN)
    return np.stack([-mu * dm.lap_array(w[k], grid, ODD) - (mu + lam) * grad_div[k] for k in range(grid.dim)])


def _cache_dir() -> Path:
    return Path(os.environ.get("NFLOW_CACHE") or Path.home() / ".cache" / "nflow")


def _cache_header(grid: Grid, n: int, mu: float, lam: float) -> str:
    return " ".join([str(grid.dim)] + [str(c) for c in grid.counts] + [str(n), repr(float(mu)), repr(float(lam))])


def cache_path(grid: Grid, n: int, mu: float, lam: float) -> Path:
    key = _cache_header(grid, n, mu, lam) + " " + " ".join(repr(float(L)) for L in grid.extents)
    return _cache_dir() / f"lame-{hashlib.sha1(key.encode()).hexdigest()[:16]}.bin"


def write_basis(path, basis: LameBasis) -> None:
    """Cache layout: ``LAME1`` line, parameter line, then little-endian float64 data."""
    head = f"LAME1\n{_cache_header(basis.grid, basis.n, basis.mu, basis.lam)}\n".encode("ascii")
    body = np.ascontiguousarray(basis.eigenvalues, dtype="<f8").tobytes()
    body += np.ascontiguousarray(basis.modes, dtype="<f8").tobytes()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    tmp.write_bytes(head + body)
    tmp.replace(path)


def read_basis(path, grid: Grid) -> Optional[LameBasis]:
    """Load a cached basis for ``grid``; ``None`` if the file is absent or does not match."""
    try:
        raw = Path(path).read_bytes()
    except OSError:
        return None
    parts = raw.split(b"\n", 2)
    if len(parts) != 3 or parts[0] != b"LAME1":
        return None
    fields = parts[1].decode("ascii").split()
    dim = int(fields[0])
    counts = tuple(int(x) for x in fields[1 : 1 + dim])
    n = int(fields[1 + dim])
    mu, lam = float(fields[2 + dim]), float(fields[3 + dim])
    if dim != grid.dim or counts != grid.counts:
        return None
    data = np.frombuffer(parts[2], dtype="<f8")
    size = n + n * dim * grid.ncells
    if data.size != size:
        return None
    eig = data[:n].astype(float)
    modes = data[n:].astype(float).reshape((n, dim) + counts)
    return LameBasis(grid, mu, lam, eig, modes)


def _compute_basis(grid: Grid, n: int, mu: float, lam: float) -> LameBasis:
    L = lame_matrix(grid, mu, lam)
    size = L.shape[0]
    v0 = np.cos(np.arange(size) * 0.7) + 1.0  # fixed start vector keeps runs reproducible
    try:
        if size <= 600:
            w, V = np.linalg.eigh(L.toarray())
            w, V = w[:n], V[:, :n]
        else:
            w, V = eigsh(L, k=n, sigma=0.0, which="LM", v0=v0, tol=1e-13)
    except (ArpackError, ArpackNoConvergence, RuntimeError) as exc:
        raise EigensolverFailed(f"Lamé eigensolve failed: {exc}") from None
    # Rayleigh-Ritz on an orthonormalized block for full orthogonality
    Q, _ = np.linalg.qr(V)
    T = Q.T @ (L @ Q)
    w, U = np.linalg.eigh(0.5 * (T + T.T))
    V = Q @ U
    # deterministic signs: largest entry of each mode positive
    idx = np.argmax(np.abs(V), axis=0)
    V = V * np.sign(V[idx, np.arange(n)])
    resid = np.linalg.norm(L @ V - V * w, axis=0)
    if not np.all(np.isfinite(w)) or np.any(w <= 0) or np.any(resid > 1e-8 * w):
        raise EigensolverFailed(f"Lamé eigenpairs inaccurate: max relative residual {np.max(resid / np.abs(w)):.3g}")
    modes = (V.T / np.sqrt(grid.cell_volume)).reshape((n, grid.dim) + grid.counts)
    return LameBasis(grid, float(mu), float(lam), w, modes)


def lame_eigenbasis(grid: Grid, n: int, mu: float, lam: float, *, use_cache: bool = True) -> LameBasis:
    """The ``n`` lowest discrete Lamé eigenpairs, L2-orthonormal, cached on disk."""
    n = int(n)
    dof = grid.dim * grid.ncells
    if n < 1 or n > dof // 4:
        raise NTooLarge(f"n = {n} modes exceeds a quarter of the {dof} velocity unknowns")
    path = cache_path(grid, n, mu, lam)
    if use_cache:
        cached = read_basis(path, grid)
        if cached is not None and cached.mu == float(mu) and cached.lam == float(lam):
            return cached
    basis = _compute_basis(grid, n, mu, lam)
    if use_cache:
        try:
            write_basis(path, basis)
        except OSError:
            pass
    return basis


def project(basis: LameBasis, w: VectorField) -> np.ndarray:
    if w.grid != basis.grid:
        raise GridMismatch("field and basis live on different grids")
    return basis.flat @ w.values.ravel() * basis.grid.cell_volume


def reconstruct(basis: LameBasis, c) -> VectorField:
    c = np.asarray(c, dtype=float)
    values = (c @ basis.flat).reshape((basis.grid.dim,) + basis.grid.counts)
    return VectorField(basis.grid, values, Boundary.DIRICHLET_ZERO)


@dataclass(frozen=True, eq=False)
class MassOperator:
    matrix: np.ndarray
    eig_min: float
    eig_max: float


def mass_operator(basis: LameBasis, rho: ScalarField) -> MassOperator:
    """``M_ab = integral rho psi_a . psi_b`` with its extreme eigenvalues."""
    if rho.grid != basis.grid:
        raise GridMismatch("density and basis live on different grids")
    if np.min(rho.values) <= 0:
        raise NonPositiveDensity(f"mass operator needs rho > 0, min = {np.min(rho.values):.6g}")
    n = basis.n
    weights = np.broadcast_to(rho.values * basis.grid.cell_volume, basis.modes.shape[1:]).reshape(-1)
    P = basis.flat
    M = (P * weights) @ P.T
    M = 0.5 * (M + M.T)
    ev = np.linalg.eigvalsh(M)
    return MassOperator(M, float(ev[0]), float(ev[-1]))


# ---------------------------------------------------------------------------
# right-hand side
# ---------------------------------------------------------------------------


def _tensor_divergence(T: np.ndarray, grid: Grid, parity) -> np.ndarray:
    """``(div T)_i = sum_j d_j T_ij`` with the ghost sign of ``T_ij`` along axis ``j``."""
    dim = grid.dim
    return np.stack(
        [sum(dm.central_diff(T[i, j], j, grid.spacing[j], parity(i, j)) for j in range(dim)) for i in range(dim)]
    )


def director_stress_tensor(grad_d: np.ndarray) -> np.ndarray:
    """``S_ij = d_i d . d_j d - |grad d|^2 delta_ij / 2`` from ``grad_d[axis, component]``."""
    S = np.einsum("ic...,jc...->ij...", grad_d, grad_d)
    half = 0.5 * np.einsum("ii...->...", S)
    for i in range(S.shape[0]):
        S[i, i] -= half
    return S


def rhs_terms(rho: ScalarField, v: VectorField, d: VectorField, phys: PhysParams, reg: RegParams) -> dict:
    """Each force density of the momentum balance as a ``(dim, *counts)`` array."""
    grid = rho.grid
    dim = grid.dim
    r, u = rho.values, v.values
    viscous = -lame_apply(grid, phys.mu, phys.lam, u)
    pressure = -phys.A * dm.grad_array(r**phys.gamma, grid, EVEN)
    delta_pressure = -reg.delta * dm.grad_array(r**reg.beta, grid, EVEN)
    grad_rho = dm.grad_array(r, grid, EVEN)
    art_visc = np.stack([-reg.eps * np.sum(grad_rho * dm.grad_array(u[i], grid, ODD), axis=0) for i in range(dim)])
    # rho v_i v_j is even across every wall: both velocity factors vanish there
    conv = r[None, None] * u[:, None] * u[None, :]
    convection = -_tensor_divergence(conv, grid, lambda i, j: EVEN)
    # grad d (.) grad d - |grad d|^2 I / 2; d_j d is odd across walls normal to j
    gd = np.stack([dm.grad_array(comp, grid, EVEN) for comp in d.values], axis=1)
    S = director_stress_tensor(gd)
    stress = -phys.nu * _tensor_divergence(S, grid, lambda i, j: EVEN if i == j else ODD)
    return {
        "viscous": viscous,
        "pressure": pressure,
        "delta_pressure": delta_pressure,
        "artificial_viscosity": art_visc,
        "convection": convection,
        "director_stress": stress,
    }


def assemble_rhs(rho: ScalarField, v: VectorField, d: VectorField, phys: PhysParams, reg: RegParams) -> VectorField:
    if not (rho.grid == v.grid == d.grid):
        raise GridMismatch("rhs fields live on different grids")
    total = reduce(np.add, rhs_terms(rho, v, d, phys, reg).values())
    return VectorField(rho.grid, total, Boundary.DIRICHLET_ZERO)


def momentum_update(M_new: MassOperator, M_old: MassOperator, c_old, basis: LameBasis, rhs_field: VectorField, dt: float) -> np.ndarray:
    """Solve ``M_new c = M_old c_old + dt P(rhs)`` by Cholesky."""
    b = M_old.matrix @ np.asarray(c_old, dtype=float) + dt * project(basis, rhs_field)
    try:
        factor = sla.cho_factor(M_new.matrix, lower=True, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SingularMass(f"mass matrix is not positive definite: {exc}") from None
    return sla.cho_solve(factor, b)


# ---------------------------------------------------------------------------
# coupled step
# ---------------------------------------------------------------------------


@dataclass
class PicardLog:
    """Per-step diagnostics filled in by :func:`coupled_step`."""

    ratios: list = field(default_factory=list)
    increments: list = field(default_factory=list)
    sweeps: int = 0
    converged: bool = False


DIVERGENCE_RUN = 5


def picard_dt_threshold(basis: LameBasis, rho: ScalarField) -> float:
    """``min rho / lambda_max``: below it the viscous part of the Picard map contracts."""
    return float(np.min(rho.values) / basis.eigenvalues[-1])


def coupled_step(
    state: FlowState,
    basis: LameBasis,
    phys: PhysParams,
    reg: RegParams,
    dt: float,
    picard_tol: float = 1e-9,
    picard_maxit: int = 50,
    *,
    cutoff: Optional[Cutoff] = None,
    log: Optional[PicardLog] = None,
    project_director: bool = False,
    rtol: float = 1e-11,
) -> FlowState:
    """Advance ``(rho, v, d)`` by ``dt`` with Picard sweeps on the velocity coefficients.

    Raises :class:`PicardDiverged` when ``picard_maxit`` sweeps do not meet
    the tolerance, or earlier once the increment has grown for
    ``DIVERGENCE_RUN`` consecutive sweeps.
    """
    cutoff = cutoff or Cutoff(reg.eps, state.grid.dim)
    log = log if log is not None else PicardLog()
    rho_k, d_k, c_k = state.rho, state.d, np.asarray(state.c)
    M_old = mass_operator(basis, rho_k)
    v_j, c_j = state.v, c_k
    prev = None
    for j in range(picard_maxit):
        try:
            rho_n = continuity_step(rho_k, v_j, reg.eps, dt, rtol=rtol)
            d_n = director_step(d_k, v_j, phys.theta, cutoff, dt, project=project_director, rtol=rtol)
        except (CflViolated, NonPositiveDensity) as exc:
            if j == 0:
                raise
            raise PicardDiverged(f"Picard iterate left the admissible set at sweep {j + 1}: {exc}", log.ratios) from exc
        M_new = mass_operator(basis, rho_n)
        rhs = assemble_rhs(rho_n, v_j, d_n, phys, reg)
        c_new = momentum_update(M_new, M_old, c_k, basis, rhs, dt)
        log.sweeps = j + 1
        if not np.all(np.isfinite(c_new)):
            raise PicardDiverged("Picard iterate is not finite", log.ratios)
        inc = float(np.linalg.norm(c_new - c_j))
        log.increments.append(inc)
        if prev is not None and prev > 0:
            log.ratios.append(inc / prev)
        if inc < picard_tol * (1.0 + float(np.linalg.norm(c_j))):
            log.converged = True
            return FlowState(rho_n, reconstruct(basis, c_new), c_new, d_n, state.t + dt)
        tail = log.ratios[-DIVERGENCE_RUN:]
        if len(tail) == DIVERGENCE_RUN and min(tail) >= 1.0:
            raise PicardDiverged(
                f"Picard increments grew for {DIVERGENCE_RUN} consecutive sweeps (last ratio {tail[-1]:.3g}); halve dt",
                log.ratios,
            )
        prev, c_j = inc, c_new
        v_j = reconstruct(basis, c_new)
    raise PicardDiverged(f"Picard did not converge in {picard_maxit} sweeps", log.ratios)


def initial_state(data: InitialData, basis: LameBasis) -> FlowState:
    """Project ``v0`` onto the basis so that ``v`` is exactly representable."""
    c = project(basis, data.v0)
    return FlowState(data.rho0, reconstruct(basis, c), c, data.d0, 0.0)
