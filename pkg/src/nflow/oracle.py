"""Closed-form reference solutions and refinement-study drivers.

The reference fields here are built from trigonometric formulas only; they
never call the time steppers.  :func:`convergence_order` is the one place
that runs the solvers, to compare them against these references.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .domain import Boundary, Grid, ScalarField, VectorField, build_grid
from .errors import InvalidParameter, OracleUnavailable, WrongDimension


def neumann_eigenvalue(grid: Grid, axis: int, k: int, *, discrete: bool = True) -> float:
    """Eigenvalue of ``-lap`` for the Neumann cosine mode ``k`` along ``axis``."""
    L, h = grid.extents[axis], grid.spacing[axis]
    if discrete:
        return (4.0 / h**2) * math.sin(k * math.pi * h / (2.0 * L)) ** 2
    return (k * math.pi / L) ** 2


def lame_decoupled_eigenvalues(grid: Grid, mu: float, count: int) -> np.ndarray:
    """Lowest ``count`` eigenvalues of the Lamé matrix when ``lambda + mu = 0``.

    The operator is then ``-mu`` times the Dirichlet Laplacian on each
    component, whose cell-centred sine modes separate across axes.
    """
    vals = []
    for ks in np.ndindex(*grid.counts):
        lam = sum(
            (4.0 / h**2) * math.sin((k + 1) * math.pi / (2 * n)) ** 2
            for k, h, n in zip(ks, grid.spacing, grid.counts)
        )
        vals.extend([mu * lam] * grid.dim)
    return np.sort(vals)[:count]


def cosine_mode(grid: Grid, axis: int, k: int) -> np.ndarray:
    x = grid.mesh()[axis]
    return np.cos(k * math.pi * x / grid.extents[axis])


def neumann_heat_mode(
    grid: Grid,
    axis: int,
    k: int,
    amplitude: float,
    diffusivity: float,
    t: float,
    *,
    mean: float = 1.0,
    discrete: bool = True,
) -> ScalarField:
    """``mean + amplitude exp(-D lam_k t) cos(k pi x_axis / L)`` (``axis`` is 0-based)."""
    if k < 1:
        raise InvalidParameter(f"mode number must be >= 1, got {k}")
    lam = neumann_eigenvalue(grid, axis, k, discrete=discrete)
    decay = math.exp(-diffusivity * lam * t)
    return ScalarField(grid, mean + amplitude * decay * cosine_mode(grid, axis, k), Boundary.NEUMANN)


def phase_flow_exact(grid: Grid, k: int, amplitude: float, theta: float, t: float, *, axis: int = 0, discrete: bool = True) -> VectorField:
    """Unit director ``(sin phi, cos phi)`` with ``phi`` a decaying Neumann mode."""
    if grid.dim != 2:
        raise WrongDimension(f"phase flow reference is two-dimensional, got dim = {grid.dim}")
    phi = neumann_heat_mode(grid, axis, k, amplitude, theta, t, mean=0.0, discrete=discrete).values
    return VectorField(grid, np.stack([np.sin(phi), np.cos(phi)]), Boundary.NEUMANN)


@dataclass
class ConvergenceStudy:
    case: str
    spacings: list
    dts: list
    errors: list
    orders: list = field(default_factory=list)
    exact: bool = False

    @property
    def order(self):
        """Observed order from the finest pair, or ``"exact"`` at machine precision."""
        if self.exact:
            return "exact"
        return self.orders[-1]


EXACT_THRESHOLD = 1e-13

_CASES = ("heat", "phase", "equilibrium")


def _run_heat(grid, dt, steps, cfg):
    from .transport import continuity_step

    D, amp, k = cfg["diffusivity"], cfg["amplitude"], cfg.get("k", 1)
    rho = neumann_heat_mode(grid, 0, k, amp, D, 0.0)
    v = VectorField(grid, np.zeros((grid.dim,) + grid.counts))
    for _ in range(steps):
        rho = continuity_step(rho, v, D, dt)
    ref = neumann_heat_mode(grid, 0, k, amp, D, steps * dt, discrete=cfg["discrete"])
    return float(np.abs(rho.values - ref.values).max())


def _run_phase(grid, dt, steps, cfg):
    from .director import Cutoff, director_step

    theta, amp, k = cfg["diffusivity"], cfg["amplitude"], cfg.get("k", 1)
    d = phase_flow_exact(grid, k, amp, theta, 0.0)
    v = VectorField(grid, np.zeros((2,) + grid.counts))
    cut = Cutoff(cfg.get("eps", 1.0), 2)
    for _ in range(steps):
        d = director_step(d, v, theta, cut, dt)
    ref = phase_flow_exact(grid, k, amp, theta, steps * dt, discrete=cfg["discrete"])
    return float(np.abs(d.values - ref.values).max())


def _run_equilibrium(grid, dt, steps, cfg):
    from .transport import continuity_step

    rho = ScalarField(grid, np.full(grid.counts, cfg.get("mean", 1.0)))
    v = VectorField(grid, np.zeros((grid.dim,) + grid.counts))
    for _ in range(steps):
        rho = continuity_step(rho, v, cfg["diffusivity"], dt)
    return float(np.abs(rho.values - cfg.get("mean", 1.0)).max())


def convergence_order(config: dict, levels: int = 3, quantity: Optional[str] = None) -> ConvergenceStudy:
    """Run a reference case on successively refined levels and report log2 error ratios.

    ``config`` keys: ``case`` (``heat``, ``phase`` or ``equilibrium``),
    ``counts`` and ``extents`` of the coarsest grid, ``dt``, ``t_end``,
    ``diffusivity``, ``amplitude``, ``refine`` (``"joint"`` halves h and dt,
    ``"space"`` halves only the first axis spacing, ``"time"`` halves only
    dt) and ``discrete`` (compare with the discrete or the continuum decay
    rate).  ``quantity`` defaults to the field the case evolves.
    """
    case = config.get("case")
    if case not in _CASES:
        raise OracleUnavailable(f"no reference solution for case {case!r}")
    expected = {"heat": "rho", "phase": "d", "equilibrium": "rho"}[case]
    if quantity is not None and quantity != expected:
        raise OracleUnavailable(f"case {case!r} has a reference for {expected!r}, not {quantity!r}")
    if levels < 2:
        raise InvalidParameter(f"a convergence study needs at least 2 levels, got {levels}")
    cfg = {"discrete": True, "refine": "joint", **config}
    runner = {"heat": _run_heat, "phase": _run_phase, "equilibrium": _run_equilibrium}[case]
    counts = list(cfg["counts"])
    extents = cfg.get("extents", [1.0] * len(counts))
    dt = float(cfg["dt"])
    t_end = float(cfg["t_end"])
    study = ConvergenceStudy(case, [], [], [])
    for _ in range(levels):
        grid = build_grid(len(counts), extents, counts)
        steps = max(1, round(t_end / dt))
        study.spacings.append(grid.spacing[0])
        study.dts.append(t_end / steps)
        study.errors.append(runner(grid, t_end / steps, steps, cfg))
        if cfg["refine"] in ("joint", "space"):
            counts = [2 * counts[0]] + counts[1:] if cfg["refine"] == "space" else [2 * n for n in counts]
        if cfg["refine"] in ("joint", "time"):
            dt /= 2.0
    errs = study.errors
    study.exact = max(errs) < EXACT_THRESHOLD
    if not study.exact:
        study.orders = [math.log2(a / b) if b > 0 else math.inf for a, b in zip(errs[:-1], errs[1:])]
    return study
