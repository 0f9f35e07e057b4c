"""Self-check suite behind ``nflow verify``.

Every check calls the library through module attributes, so a perturbed
stencil or solver (for instance via monkeypatching) is seen by the checks.
Failures are collected and reported, never raised.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import director, domain, galerkin, monitors, oracle, run, smoke, transport
from .domain import Boundary

# energy identity residual constant C in  residual <= C (dt + h^2) T
ENERGY_CONSTANT = 100.0


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    limit: float
    seconds: float = 0.0
    note: str = ""


def _random_fields(grid, rng):
    return rng.standard_normal(grid.counts), rng.standard_normal(grid.counts)


def check_summation_by_parts(seed: int = 0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for dim, n in ((2, 16), (2, 32), (3, 16)):
        g = domain.build_grid(dim, (1.0,) * dim, (n,) * dim)
        a, b = _random_fields(g, rng)
        for sign in (1.0, -1.0):
            lab = np.sum(domain.lap_array(a, g, sign) * b)
            alb = np.sum(a * domain.lap_array(b, g, sign))
            form = domain.face_form_array(a, g, sign) / g.cell_volume
            scale = np.sum(a * a) * max(1.0 / h**2 for h in g.spacing)
            worst = max(worst, abs(lab - alb) / scale, abs(np.sum(domain.lap_array(a, g, sign) * a) + form) / scale)
        # discrete divergence theorem and grad/div adjointness
        w = rng.standard_normal((dim,) + g.counts)
        div_w = domain.div_array(w, g, -1.0)
        grad_a = domain.grad_array(a, g, 1.0)
        adj = np.sum(grad_a * w) + np.sum(a * div_w)
        total = np.sum(div_w)
        scale = math.sqrt(np.sum(a * a) * np.sum(w * w)) / g.min_spacing
        worst = max(worst, abs(adj) / scale, abs(total) / scale)
    return worst, 1e-12


def check_stencil_eigenmodes():
    g = domain.build_grid(2, (1.0, 2.0), (24, 12))
    worst = 0.0
    for axis, k in ((0, 1), (0, 4), (1, 3)):
        u = oracle.cosine_mode(g, axis, k)
        lam = oracle.neumann_eigenvalue(g, axis, k)
        lap = domain.lap_array(u, g, 1.0)
        worst = max(worst, float(np.abs(lap + lam * u).max()) / lam)
        grad = domain.grad_array(u, g, 1.0)[axis]
        ref = -np.sin(k * math.pi * g.mesh()[axis] / g.extents[axis]) * math.sin(k * math.pi * g.spacing[axis] / g.extents[axis]) / g.spacing[axis]
        worst = max(worst, float(np.abs(grad - ref).max()) / math.sqrt(lam))
    return worst, 1e-12


def check_mass_conservation(steps: int = 200):
    g = domain.build_grid(2, (1.0, 1.0), (16, 16))
    x, y = g.mesh()
    rho = domain.ScalarField(g, 1 + 0.3 * np.cos(np.pi * x) * np.cos(2 * np.pi * y))
    v = domain.VectorField(g, 0.5 * np.stack([np.sin(np.pi * x) * np.sin(2 * np.pi * y), -np.sin(2 * np.pi * x) * np.sin(np.pi * y)]))
    m0 = domain.integrate(rho)
    drift = 0.0
    for _ in range(steps):
        rho = transport.continuity_step(rho, v, 0.01, 1e-2)
        drift = max(drift, abs(domain.integrate(rho) - m0) / m0)
    return drift, 1e-12


def check_heat_oracle():
    g = domain.build_grid(2, (1.0, 1.0), (16, 16))
    D, dt = 0.1, 0.05
    rho = oracle.neumann_heat_mode(g, 0, 1, 0.2, D, 0.0)
    v = domain.VectorField(g, np.zeros((2,) + g.counts))
    out = transport.continuity_step(rho, v, D, dt)
    factor = 1.0 / (1.0 + dt * D * oracle.neumann_eigenvalue(g, 0, 1))
    ref = 1.0 + 0.2 * factor * oracle.cosine_mode(g, 0, 1)
    return float(np.abs(out.values - ref).max()), 1e-11


def check_lame_basis():
    g = domain.build_grid(2, (1.0, 1.0), (16, 16))
    basis = galerkin.lame_eigenbasis(g, 10, 1.0, -1.0, use_cache=False)
    gram = (basis.flat * g.cell_volume) @ basis.flat.T
    ortho = float(np.abs(gram - np.eye(basis.n)).max())
    ref = oracle.lame_decoupled_eigenvalues(g, 1.0, 10)
    eig = float(np.abs(basis.eigenvalues - ref).max() / ref.max())
    return max(ortho, eig), 1e-8


def check_mass_operator(samples: int = 10, seed: int = 0):
    g = domain.build_grid(2, (1.0, 1.0), (16, 16))
    basis = galerkin.lame_eigenbasis(g, 12, 1.0, 0.0, use_cache=False)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        rho = domain.ScalarField(g, rng.uniform(0.2, 3.0, g.counts))
        M = galerkin.mass_operator(basis, rho)
        lo, hi = rho.values.min(), rho.values.max()
        worst = max(worst, lo - M.eig_min, M.eig_max - hi)
    return max(worst, 0.0), 1e-10


def _smoke_run():
    cfg = smoke.smoke_config(2, counts=[24, 24], n_modes=16, dt=1e-3, t_end=0.01)
    return cfg, run.simulate(cfg)


def check_maximum_principle(cached, tol: Optional[float]):
    cfg, res = cached()
    tol = cfg.default_max_principle_tol() if tol is None else tol
    excess = max(r.max_abs_d for r in res.reports) - 1.0
    return excess, tol


def check_lower_bound(cached, tol: Optional[float]):
    cfg, res = cached()
    tol = cfg.default_max_principle_tol() if tol is None else tol
    floor = res.reports[0].min_dN
    return floor - min(r.min_dN for r in res.reports), tol


def check_energy_identity(cached):
    cfg, res = cached()
    h = 1.0 / cfg.counts[0]
    limit = ENERGY_CONSTANT * (cfg.dt + h * h) * cfg.t_end
    value = max(monitors.energy_identity_residual_2d(res.reports), monitors.energy_inequality_excess(res.reports))
    return value, limit


def check_picard_equilibrium():
    cfg = smoke.smoke_config(2, counts=[12, 12], n_modes=8, rho0=1.0, v0="0", tilt=0.0, dt=1e-3, t_end=2e-3)
    res = run.simulate(cfg)
    E = [r.E_delta for r in res.reports]
    return float(max(res.picard_sweeps) - 1 + (max(E) - min(E))), 1e-12


def check_director_unit_bound():
    g = domain.build_grid(2, (1.0, 1.0), (16, 16))
    phi = 0.5 * oracle.cosine_mode(g, 0, 1) * oracle.cosine_mode(g, 1, 2)
    d = domain.VectorField(g, np.stack([np.sin(phi), np.cos(phi)]), Boundary.NEUMANN)
    v = domain.VectorField(g, np.zeros((2,) + g.counts))
    cut = director.Cutoff(1e-2, 2)
    for _ in range(20):
        d = director.director_step(d, v, 1.0, cut, 1e-3)
    return float(d.magnitude().max() - 1.0), 5.0 * (1e-3 + g.min_spacing**2)


def check_calibration():
    vals = []
    for n in (32, 64):
        g = domain.build_grid(2, (1.0, 1.0), (n, n))
        vals.append(monitors.calibrate(g, 16))
    spread = max(
        abs(vals[1].nirenberg / vals[0].nirenberg - 1.0),
        abs(vals[1].elliptic / vals[0].elliptic - 1.0),
    )
    if not vals[0].eps0 > 0:
        return math.inf, 0.2
    return spread, 0.2


def run_checks(*, max_principle_tol: Optional[float] = None) -> list:
    cache = {}

    def cached():
        if "smoke" not in cache:
            cache["smoke"] = _smoke_run()
        return cache["smoke"]

    table: list[tuple[str, Callable]] = [
        ("summation_by_parts", check_summation_by_parts),
        ("stencil_eigenmodes", check_stencil_eigenmodes),
        ("mass_conservation", check_mass_conservation),
        ("heat_oracle", check_heat_oracle),
        ("lame_basis", check_lame_basis),
        ("mass_operator_bounds", check_mass_operator),
        ("director_unit_bound", check_director_unit_bound),
        ("picard_equilibrium", check_picard_equilibrium),
        ("maximum_principle", lambda: check_maximum_principle(cached, max_principle_tol)),
        ("lower_bound_principle", lambda: check_lower_bound(cached, max_principle_tol)),
        ("energy_identity", lambda: check_energy_identity(cached)),
        ("calibration_stability", check_calibration),
    ]
    results = []
    for name, fn in table:
        start = time.perf_counter()
        try:
            value, limit = fn()
            passed = bool(np.isfinite(value) and value <= limit)
            results.append(CheckResult(name, passed, float(value), float(limit), time.perf_counter() - start))
        except Exception as exc:  # report, do not raise
            results.append(CheckResult(name, False, math.nan, math.nan, time.perf_counter() - start, f"{type(exc).__name__}: {exc}"))
    return results


def format_table(results) -> str:
    lines = [f"{'check':<24} {'status':<6} {'value':>12} {'limit':>12} {'s':>6}"]
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        line = f"{r.name:<24} {status:<6} {r.value:>12.4g} {r.limit:>12.4g} {r.seconds:>6.2f}"
        if r.note:
            line += f"  {r.note}"
        lines.append(line)
    return "\n".join(lines)
