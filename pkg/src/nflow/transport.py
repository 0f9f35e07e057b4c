"""Regularized continuity equation: implicit Neumann diffusion, explicit conservative advection."""

from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np

from . import domain as dm
from .domain import Boundary, ScalarField, VectorField
from .errors import CflViolated, EmptyHistory, GridMismatch, InvalidParameter, NonPositiveDensity
from .linsolve import identity_minus, solve_spd

TINY = 1e-300
LINEAR_RTOL = 1e-11


def cfl_limit(v: VectorField) -> float:
    """Largest admissible step ``h_min / (2 max|v|)``; infinite for ``v = 0``."""
    vmax = float(v.magnitude().max())
    return v.grid.min_spacing / (2.0 * vmax + TINY)


def check_cfl(v: VectorField, dt: float) -> None:
    limit = cfl_limit(v)
    if dt > limit:
        raise CflViolated(f"dt = {dt:.6g} exceeds the advective limit {limit:.6g}")


def mass_flux_divergence(rho: np.ndarray, v: np.ndarray, grid) -> np.ndarray:
    """Face-flux divergence of ``rho v``.

    The flux through an interior face is the arithmetic mean of ``rho v`` in
    the two adjacent cells; wall fluxes vanish.  Interior faces telescope,
    so the cell sum is zero up to rounding.
    """
    m = rho[None] * v
    out = np.zeros_like(rho)
    for k in range(grid.dim):
        h = grid.spacing[k]
        b = np.moveaxis(m[k], k, 0)
        face = 0.5 * (b[1:] + b[:-1])
        zero = np.zeros_like(b[:1])
        flux = np.concatenate([zero, face, zero])
        out += np.moveaxis((flux[1:] - flux[:-1]) / h, 0, k)
    return out


def _diffusion_matrix(grid, coeff: float):
    return identity_minus(dm.laplacian_matrix(grid, Boundary.NEUMANN), coeff)


def continuity_step(rho: ScalarField, v: VectorField, eps: float, dt: float, *, rtol: float = LINEAR_RTOL) -> ScalarField:
    """Advance ``rho`` by one step: ``(I - dt eps lap) rho' = rho - dt div(rho v)``."""
    if rho.grid != v.grid:
        raise GridMismatch("density and velocity live on different grids")
    if not dt > 0:
        raise InvalidParameter(f"dt must be positive, got {dt}")
    if np.min(rho.values) <= 0:
        raise NonPositiveDensity(f"input density has min {np.min(rho.values):.6g}")
    check_cfl(v, dt)
    grid = rho.grid
    rhs = rho.values - dt * mass_flux_divergence(rho.values, v.values, grid)
    A = _diffusion_matrix(grid, dt * eps)
    out = solve_spd(A, rhs, rtol, keep_mean=True)
    if out.min() <= 0:
        raise NonPositiveDensity(f"density lost positivity (min {out.min():.6g}); reduce dt")
    return ScalarField(grid, out, Boundary.NEUMANN)


def w1inf_parts(v: VectorField) -> tuple:
    """``(sup |v|, sup |grad v|)`` with the Frobenius norm of the velocity gradient."""
    s = v.kind.ghost_sign
    grads = np.stack([dm.grad_array(c, v.grid, s) for c in v.values])
    return float(v.magnitude().max()), float(np.sqrt(np.sum(grads**2, axis=(0, 1))).max())


def pointwise_bounds(rho_lower: float, rho_upper: float, history: Sequence, t: float) -> tuple:
    """Envelope ``(rho_lower e^{-K}, rho_upper e^{K})`` with ``K = integral_0^t ||v||_{W^{1,inf}}``.

    ``history`` holds ``(time, sup|v|, sup|grad v|)`` samples in increasing
    time; each sample is held constant until the next one (left endpoint rule)
    and the last one until ``t``.
    """
    hist = list(history)
    if not hist:
        raise EmptyHistory("pointwise_bounds needs at least one velocity sample")
    K = 0.0
    for k, (tk, vs, gs) in enumerate(hist):
        if tk >= t:
            break
        t_next = hist[k + 1][0] if k + 1 < len(hist) else t
        K += max(vs, gs) * (min(t_next, t) - tk)
    return rho_lower * math.exp(-K), rho_upper * math.exp(K)


def velocity_sensitivity(rho0: ScalarField, v1: VectorField, v2: VectorField, eps: float, dt: float, steps: int) -> float:
    """``||S(v1) - S(v2)||_2`` after ``steps`` continuity steps with frozen velocities."""
    if v1.grid != v2.grid or v1.grid != rho0.grid:
        raise GridMismatch("sensitivity inputs must share one grid")
    a = b = rho0
    for _ in range(steps):
        a = continuity_step(a, v1, eps, dt)
        b = continuity_step(b, v2, eps, dt)
    return dm.norm(a.with_values(a.values - b.values), 2)
