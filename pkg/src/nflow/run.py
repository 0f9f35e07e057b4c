"""Time loop: advance a configured case to ``t_end`` and collect monitors."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import galerkin as gk
from .config import Config
from .director import Cutoff
from .errors import PicardDiverged
from .monitors import Calibration, Trace, calibrate
from .transport import w1inf_parts


@dataclass
class RunResult:
    config: Config
    state: gk.FlowState
    trace: Trace
    basis: gk.LameBasis
    eps0: float
    calibration: Optional[Calibration]
    velocity_history: list = field(default_factory=list)
    dt_history: list = field(default_factory=list)
    picard_sweeps: list = field(default_factory=list)
    picard_ratios: list = field(default_factory=list)
    halvings: int = 0
    states: list = field(default_factory=list)

    @property
    def reports(self):
        return self.trace.reports


def simulate(
    cfg: Config,
    *,
    basis: Optional[gk.LameBasis] = None,
    keep_states: bool = False,
    on_step: Optional[Callable] = None,
) -> RunResult:
    """Run ``cfg`` to ``t_end``; a diverging Picard step is retried with dt halved."""
    grid = cfg.grid()
    phys, reg = cfg.phys(), cfg.reg()
    calibration = None
    eps0 = cfg.eps0
    if eps0 is None:
        calibration = calibrate(grid, cfg.calibration_samples)
        eps0 = calibration.eps0
    data = cfg.initial_data(grid, eps0)
    basis = basis or gk.lame_eigenbasis(grid, reg.n_modes, phys.mu, phys.lam)
    state = gk.initial_state(data, basis)
    cutoff = Cutoff(reg.eps, grid.dim)
    trace = Trace(phys, reg, gradient_coeff=cfg.gradient_coeff)
    trace.add(state)
    result = RunResult(cfg, state, trace, basis, eps0, calibration)
    if keep_states:
        result.states.append(state)
    n_steps = max(1, round(cfg.t_end / cfg.dt))
    dt_nominal = cfg.t_end / n_steps
    target = [k * dt_nominal for k in range(1, n_steps + 1)]
    for t_next in target:
        while state.t < t_next - 1e-12 * max(1.0, t_next):
            dt = t_next - state.t
            halvings = 0
            while True:
                log = gk.PicardLog()
                try:
                    new = gk.coupled_step(
                        state, basis, phys, reg, dt, cfg.picard_tol, cfg.picard_maxit,
                        cutoff=cutoff, log=log, project_director=cfg.project_director, rtol=cfg.linear_rtol,
                    )
                    break
                except PicardDiverged:
                    halvings += 1
                    result.halvings += 1
                    if halvings > cfg.max_halvings:
                        raise
                    dt *= 0.5
            result.velocity_history.append((state.t, *w1inf_parts(state.v)))
            result.dt_history.append(dt)
            result.picard_sweeps.append(log.sweeps)
            result.picard_ratios.append(max(log.ratios) if log.ratios else 0.0)
            state = new
            trace.add(state)
            if keep_states:
                result.states.append(state)
            if on_step is not None:
                on_step(state, trace.reports[-1])
    if math.isclose(state.t, cfg.t_end, rel_tol=1e-12):
        state = state.advanced(t=cfg.t_end)
    result.state = state
    return result
