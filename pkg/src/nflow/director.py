"""Director heat flow with gradient cut-off, and the two pointwise principles it obeys."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import domain as dm
from .domain import Boundary, VectorField
from .errors import BadIndex, GridMismatch, InvalidParameter, NegativeArgument
from .linsolve import identity_minus, solve_spd
from .transport import LINEAR_RTOL, check_cfl


@dataclass(frozen=True)
class Cutoff:
    """Saturation of ``|grad d|^2``.

    In 2D the cut-off is the identity.  In 3D, with ``M = 1/eps``, it is the
    identity up to ``M - 1``, a quadratic C^1 blend on ``(M - 1, M + 1)`` and
    the constant ``M`` beyond.
    """

    eps: float
    dim: int

    def __post_init__(self):
        if not self.eps > 0:
            raise InvalidParameter(f"cut-off eps must be positive, got {self.eps}")
        if self.dim not in (2, 3):
            raise InvalidParameter(f"cut-off dim must be 2 or 3, got {self.dim}")

    @property
    def cap(self) -> float:
        return 1.0 / self.eps


def _checked(x):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(np.isnan(x)):
        raise NegativeArgument("cut-off argument must be nonnegative")
    return x


def cutoff_eval(c: Cutoff, x):
    x = _checked(x)
    if c.dim == 2:
        out = x.copy()
    else:
        M = c.cap
        s = x - (M - 1.0)
        out = np.where(x <= M - 1.0, x, np.where(x >= M + 1.0, M, x - 0.25 * s * s))
    return float(out) if out.ndim == 0 else out


def cutoff_deriv(c: Cutoff, x):
    x = _checked(x)
    if c.dim == 2:
        out = np.ones_like(x)
    else:
        M = c.cap
        out = np.where(x <= M - 1.0, 1.0, np.where(x >= M + 1.0, 0.0, 1.0 - 0.5 * (x - (M - 1.0))))
    return float(out) if out.ndim == 0 else out


def gradient_energy_density(d: VectorField) -> np.ndarray:
    """Pointwise ``sum_ij (d_i d_j)^2`` from central differences."""
    s = d.kind.ghost_sign
    return sum(np.sum(dm.grad_array(comp, d.grid, s) ** 2, axis=0) for comp in d.values)


def reaction_term(d: VectorField, theta: float, cutoff: Cutoff) -> np.ndarray:
    return theta * cutoff_eval(cutoff, gradient_energy_density(d))[None] * d.values


def advection(d: VectorField, v: VectorField) -> np.ndarray:
    """``(v . grad) d`` componentwise."""
    s = d.kind.ghost_sign
    return np.stack([np.sum(v.values * dm.grad_array(comp, d.grid, s), axis=0) for comp in d.values])


def director_step(
    d: VectorField,
    v: VectorField,
    theta: float,
    cutoff: Cutoff,
    dt: float,
    *,
    rtol: float = LINEAR_RTOL,
    project: bool = False,
) -> VectorField:
    """``(I - theta dt lap) d' = d + dt (theta f(|grad d|^2) d - (v.grad) d)`` per component.

    ``project=True`` renormalizes to unit length afterwards; it is meant for
    exploratory runs only since it hides drift off the sphere.
    """
    if d.grid != v.grid:
        raise GridMismatch("director and velocity live on different grids")
    if not dt > 0:
        raise InvalidParameter(f"dt must be positive, got {dt}")
    check_cfl(v, dt)
    grid = d.grid
    rhs = d.values + dt * (reaction_term(d, theta, cutoff) - advection(d, v))
    A = identity_minus(dm.laplacian_matrix(grid, Boundary.NEUMANN), theta * dt)
    out = np.stack([solve_spd(A, r, rtol, keep_mean=True) for r in rhs])
    if project:
        out = out / np.maximum(np.sqrt(np.sum(out**2, axis=0)), 1e-300)[None]
    return VectorField(grid, out, Boundary.NEUMANN)


def unit_norm_drift(d: VectorField) -> float:
    return float(np.abs(d.magnitude() - 1.0).max())


def component_min(d: VectorField, i: int) -> float:
    """Minimum of component ``i`` (1-based)."""
    if isinstance(i, bool) or not 1 <= int(i) <= d.grid.dim or int(i) != i:
        raise BadIndex(f"component index must lie in 1..{d.grid.dim}, got {i}")
    return float(d.values[int(i) - 1].min())
