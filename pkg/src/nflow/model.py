"""Parameters, flow state, pressure law, initial data and the energy functionals."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np

from . import domain as dm
from .domain import Boundary, Grid, ScalarField, VectorField
from .errors import DensityOutOfBounds, InvalidParameter, NonPositiveDensity, TiltTooLarge
from .expr import evaluate


def _finite(name, value):
    if not isinstance(value, (int, float, np.floating, np.integer)) or isinstance(value, bool):
        raise InvalidParameter(f"{name} must be a real number, got {value!r}")
    if not math.isfinite(value):
        raise InvalidParameter(f"{name} must be finite, got {value!r}")
    return float(value)


@dataclass(frozen=True)
class PhysParams:
    """Physical constants.  ``lam`` is the bulk viscosity."""

    mu: float
    lam: float
    nu: float
    theta: float
    A: float
    gamma: float
    dim: int = 2

    def __post_init__(self):
        for name in ("mu", "lam", "nu", "theta", "A", "gamma"):
            object.__setattr__(self, name, _finite(name, getattr(self, name)))
        if self.dim not in (2, 3):
            raise InvalidParameter(f"dim must be 2 or 3, got {self.dim}")
        if self.mu <= 0:
            raise InvalidParameter(f"mu > 0 violated: mu = {self.mu}")
        if self.lam + self.mu < 0:
            raise InvalidParameter(f"lambda + mu >= 0 violated: lambda + mu = {self.lam + self.mu}")
        if self.nu <= 0:
            raise InvalidParameter(f"nu > 0 violated: nu = {self.nu}")
        if self.theta <= 0:
            raise InvalidParameter(f"theta > 0 violated: theta = {self.theta}")
        if self.A <= 0:
            raise InvalidParameter(f"A > 0 violated: A = {self.A}")
        if self.gamma <= self.dim / 2:
            raise InvalidParameter(f"gamma > dim/2 violated: gamma = {self.gamma}, dim = {self.dim}")


@dataclass(frozen=True)
class RegParams:
    """Regularization constants of the approximation hierarchy.

    ``gamma`` and ``dim`` are carried only to check ``beta >= max(gamma, 8)``
    and the three-dimensional requirement ``eps <= 1``.
    """

    eps: float
    delta: float
    beta: float
    n_modes: int
    gamma: float = 1.0
    dim: int = 2

    def __post_init__(self):
        for name in ("eps", "delta", "beta", "gamma"):
            object.__setattr__(self, name, _finite(name, getattr(self, name)))
        if isinstance(self.n_modes, bool) or int(self.n_modes) != self.n_modes:
            raise InvalidParameter(f"n_modes must be an integer, got {self.n_modes!r}")
        object.__setattr__(self, "n_modes", int(self.n_modes))
        if self.eps <= 0:
            raise InvalidParameter(f"eps > 0 violated: eps = {self.eps}")
        if self.delta <= 0:
            raise InvalidParameter(f"delta > 0 violated: delta = {self.delta}")
        if self.beta < max(self.gamma, 8.0):
            raise InvalidParameter(f"beta >= max(gamma, 8) violated: beta = {self.beta}, gamma = {self.gamma}")
        if self.n_modes < 1:
            raise InvalidParameter(f"n_modes >= 1 violated: n_modes = {self.n_modes}")
        if self.dim == 3 and self.eps > 1:
            raise InvalidParameter(f"eps <= 1 violated in 3D: eps = {self.eps}")

    @classmethod
    def for_phys(cls, phys: PhysParams, eps, delta, beta, n_modes) -> "RegParams":
        return cls(eps, delta, beta, n_modes, gamma=phys.gamma, dim=phys.dim)


@dataclass(frozen=True)
class FlowState:
    rho: ScalarField
    v: VectorField
    c: np.ndarray
    d: VectorField
    t: float = 0.0

    def __post_init__(self):
        c = np.array(self.c, dtype=float).ravel()
        c.setflags(write=False)
        object.__setattr__(self, "c", c)
        if float(np.min(self.rho.values)) <= 0:
            raise NonPositiveDensity(f"density must be positive, min = {np.min(self.rho.values)}")

    @property
    def grid(self) -> Grid:
        return self.rho.grid

    def advanced(self, **changes) -> "FlowState":
        return replace(self, **changes)


@dataclass(frozen=True)
class InitialData:
    rho0: ScalarField
    v0: VectorField
    d0: VectorField
    eps0: float
    rho_lower: float = field(default=0.0)
    rho_upper: float = field(default=math.inf)

    def __post_init__(self):
        r = self.rho0.values
        if not np.all(np.isfinite(r)) or r.min() <= 0:
            raise DensityOutOfBounds(f"initial density must be finite and positive, min = {r.min()}")
        if r.min() < self.rho_lower or r.max() > self.rho_upper:
            raise DensityOutOfBounds(
                f"initial density range [{r.min()}, {r.max()}] leaves [{self.rho_lower}, {self.rho_upper}]"
            )
        mag = self.d0.magnitude()
        if mag.max() > 1.0 + 1e-12:
            raise TiltTooLarge(f"|d0| <= 1 violated: max |d0| = {mag.max()}")
        gap = 1.0 - self.d0.values[-1]
        if gap.max() >= self.eps0:
            raise TiltTooLarge(f"1 - d0_N < eps0 violated: max(1 - d0_N) = {gap.max():.6g}, eps0 = {self.eps0:.6g}")

    @property
    def grid(self) -> Grid:
        return self.rho0.grid


def pressure(rho: ScalarField, A: float, gamma: float) -> ScalarField:
    if np.min(rho.values) <= 0:
        raise NonPositiveDensity(f"pressure needs rho > 0, min = {np.min(rho.values)}")
    return rho.with_values(A * rho.values**gamma)


Expr = Union[str, float, int]


def make_initial_data(
    grid: Grid,
    rho_expr: Expr,
    v_expr: Union[Expr, Sequence[Expr]],
    tilt_expr: Expr,
    eps0: float,
    *,
    azimuth_expr: Expr = 0.0,
    rho_lower: float = 0.0,
    rho_upper: float = math.inf,
) -> InitialData:
    """Build ``(rho0, v0, d0)`` from expressions.

    ``tilt_expr`` gives a signed tilt angle phi away from ``e_N``.  In 2D
    ``d0 = (sin phi, cos phi)``; in 3D ``d0 = (sin phi cos psi, sin phi sin psi, cos phi)``
    with azimuth psi from ``azimuth_expr``.  Both are unit vectors per cell.
    """
    rho = evaluate(rho_expr, grid)
    if not np.all(np.isfinite(rho)) or rho.min() <= 0:
        raise DensityOutOfBounds(f"rho0 must be positive everywhere, min = {rho.min():.6g}")
    if isinstance(v_expr, (str, int, float)):
        v_expr = [v_expr] * grid.dim
    if len(v_expr) != grid.dim:
        raise InvalidParameter(f"v0 needs {grid.dim} component expressions, got {len(v_expr)}")
    v = np.stack([evaluate(e, grid) for e in v_expr])
    phi = evaluate(tilt_expr, grid)
    if grid.dim == 2:
        d = np.stack([np.sin(phi), np.cos(phi)])
    else:
        psi = evaluate(azimuth_expr, grid)
        d = np.stack([np.sin(phi) * np.cos(psi), np.sin(phi) * np.sin(psi), np.cos(phi)])
    return InitialData(
        ScalarField(grid, rho, Boundary.NEUMANN),
        VectorField(grid, v, Boundary.DIRICHLET_ZERO),
        VectorField(grid, d, Boundary.NEUMANN),
        float(eps0),
        rho_lower,
        rho_upper,
    )


def director_gradient_energy(d: VectorField) -> float:
    """``integral |grad d|^2`` in face form (the quantity the implicit diffusion dissipates)."""
    return dm.dirichlet_form(d)


def energy_E(state: FlowState, phys: PhysParams, *, gradient_coeff: str = "nu") -> float:
    """Kinetic + pressure potential + director gradient energy.

    ``gradient_coeff`` selects ``nu/2`` (default) or ``nu*theta/2`` (``"nu_theta"``)
    in front of ``|grad d|^2``.
    """
    if gradient_coeff == "nu":
        k = phys.nu
    elif gradient_coeff == "nu_theta":
        k = phys.nu * phys.theta
    else:
        raise InvalidParameter(f"gradient_coeff must be 'nu' or 'nu_theta', got {gradient_coeff!r}")
    rho = state.rho.values
    vol = state.grid.cell_volume
    kinetic = 0.5 * np.sum(rho * np.sum(state.v.values**2, axis=0)) * vol
    potential = phys.A / (phys.gamma - 1.0) * np.sum(rho**phys.gamma) * vol
    return float(kinetic + potential + 0.5 * k * director_gradient_energy(state.d))


def delta_pressure_energy(rho: ScalarField, reg: RegParams) -> float:
    return float(reg.delta / (reg.beta - 1.0) * np.sum(rho.values**reg.beta) * rho.grid.cell_volume)


def energy_E_delta(state: FlowState, phys: PhysParams, reg: RegParams, *, gradient_coeff: str = "nu") -> float:
    return energy_E(state, phys, gradient_coeff=gradient_coeff) + delta_pressure_energy(state.rho, reg)
