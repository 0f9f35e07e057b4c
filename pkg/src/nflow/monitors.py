"""Runtime monitors: energy bookkeeping, pointwise principles, interpolation constants.

The functional inequalities behind the global estimates come with
unspecified constants.  Here they are measured on the actual grid by
sampling random smooth fields, and the measured values feed the smallness
threshold ``eps0`` on the initial director tilt.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from . import domain as dm
from .director import Cutoff, gradient_energy_density
from .domain import Boundary, Grid, ScalarField, VectorField
from .errors import BadConstants, InadmissibleB, InadmissibleExponents, InvalidParameter, WrongDimension
from .model import FlowState, PhysParams, RegParams, delta_pressure_energy, energy_E, energy_E_delta
from .transport import mass_flux_divergence

EVEN = Boundary.NEUMANN.ghost_sign
ODD = Boundary.DIRICHLET_ZERO.ghost_sign


@dataclass
class EnergyReport:
    t: float
    E: float
    E_delta: float
    dissipation_D: float
    dissipation_F: float
    mass: float
    min_rho: float
    max_rho: float
    max_abs_d: float
    min_dN: float
    unit_drift: float
    dtd_l2: float
    energy_residual: float
    diss_delta_pressure: float
    diss_pressure: float
    delta_energy: float
    momentum: float
    dim: int = field(default=2, repr=False)

    @classmethod
    def columns(cls) -> list:
        return [f.name for f in fields(cls) if f.name != "dim"]

    def row(self) -> list:
        return [getattr(self, name) for name in self.columns()]

    @property
    def identity_dissipation(self) -> float:
        """Dissipation rate that balances ``dE_delta/dt`` in the planar identity."""
        return self.dissipation_F + self.diss_delta_pressure + self.diss_pressure


def _artificial_pressure_dissipation(rho: np.ndarray, grid: Grid, phys: PhysParams, reg: RegParams) -> tuple:
    g2 = np.sum(dm.grad_array(rho, grid, EVEN) ** 2, axis=0)
    vol = grid.cell_volume
    dp = reg.eps * reg.delta * reg.beta * np.sum(rho ** (reg.beta - 2) * g2) * vol
    pp = phys.A * reg.eps * phys.gamma * np.sum(rho ** (phys.gamma - 2) * g2) * vol
    return float(dp), float(pp)


def record(
    state: FlowState,
    phys: PhysParams,
    reg: RegParams,
    prev_state: Optional[FlowState] = None,
    *,
    energy_residual: float = 0.0,
    gradient_coeff: str = "nu",
) -> EnergyReport:
    grid = state.grid
    vol = grid.cell_volume
    rho, v, d = state.rho.values, state.v.values, state.d.values
    viscous = phys.mu * dm.dirichlet_form(state.v)
    div_v = dm.div_array(v, grid, ODD)
    bulk = (phys.lam + phys.mu) * float(np.sum(div_v**2) * vol)
    lap_d = np.stack([dm.lap_array(c, grid, EVEN) for c in d])
    harmonic = phys.nu * phys.theta * float(np.sum(lap_d**2) * vol)
    tension = lap_d + gradient_energy_density(state.d)[None] * d
    harmonic_map = phys.nu * phys.theta * float(np.sum(tension**2) * vol)
    dp, pp = _artificial_pressure_dissipation(rho, grid, phys, reg)
    mag = state.d.magnitude()
    dtd = 0.0
    if prev_state is not None and state.t > prev_state.t:
        dtd = dm.norm(state.d.with_values(d - prev_state.d.values), 2) / (state.t - prev_state.t)
    mom = np.sum(rho[None] * v, axis=tuple(range(1, grid.dim + 1))) * vol
    return EnergyReport(
        t=float(state.t),
        E=energy_E(state, phys, gradient_coeff=gradient_coeff),
        E_delta=energy_E_delta(state, phys, reg, gradient_coeff=gradient_coeff),
        dissipation_D=viscous + bulk + harmonic + dp + pp,
        dissipation_F=viscous + bulk + harmonic_map,
        mass=dm.integrate(state.rho),
        min_rho=float(rho.min()),
        max_rho=float(rho.max()),
        max_abs_d=float(mag.max()),
        min_dN=float(d[-1].min()),
        unit_drift=float(np.abs(mag - 1.0).max()),
        dtd_l2=float(dtd),
        energy_residual=float(energy_residual),
        diss_delta_pressure=dp,
        diss_pressure=pp,
        delta_energy=delta_pressure_energy(state.rho, reg),
        momentum=float(np.linalg.norm(mom)),
        dim=grid.dim,
    )


class Trace:
    """Accumulates reports and the running energy-identity defect.

    The defect is ``E_delta(t) + integral_0^t (F + artificial pressure dissipation) - E_delta(0)``
    with trapezoidal quadrature; in 3D the same number measures the energy inequality.
    """

    def __init__(self, phys: PhysParams, reg: RegParams, *, gradient_coeff: str = "nu"):
        self.phys, self.reg = phys, reg
        self.gradient_coeff = gradient_coeff
        self.reports: list = []
        self._dissipated = 0.0
        self._prev_state: Optional[FlowState] = None

    def add(self, state: FlowState) -> EnergyReport:
        rep = record(state, self.phys, self.reg, self._prev_state, gradient_coeff=self.gradient_coeff)
        if self.reports:
            last = self.reports[-1]
            self._dissipated += 0.5 * (rep.t - last.t) * (rep.identity_dissipation + last.identity_dissipation)
            rep.energy_residual = rep.E_delta + self._dissipated - self.reports[0].E_delta
        self.reports.append(rep)
        self._prev_state = state
        return rep


def write_trace(path, reports: Sequence[EnergyReport]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(EnergyReport.columns())
        for rep in reports:
            w.writerow([repr(float(x)) for x in rep.row()])


def read_trace(path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: float(v) for k, v in row.items()} for row in rows]


def energy_identity_residual_2d(reports: Sequence[EnergyReport]) -> float:
    """``max_t |E_delta(t) + integral_0^t dissipation - E_delta(0)|`` for a planar run."""
    reports = list(reports)
    if not reports:
        return 0.0
    if any(r.dim != 2 for r in reports):
        raise WrongDimension("the energy identity is checked only in two dimensions")
    worst, acc = 0.0, 0.0
    for prev, cur in zip(reports[:-1], reports[1:]):
        acc += 0.5 * (cur.t - prev.t) * (cur.identity_dissipation + prev.identity_dissipation)
        worst = max(worst, abs(cur.E_delta + acc - reports[0].E_delta))
    return worst


def energy_inequality_excess(reports: Sequence[EnergyReport]) -> float:
    """Largest ``E_delta(t) + integral dissipation - E_delta(0)``; nonpositive means it holds exactly."""
    worst, acc = -math.inf, 0.0
    reports = list(reports)
    for prev, cur in zip(reports[:-1], reports[1:]):
        acc += 0.5 * (cur.t - prev.t) * (cur.identity_dissipation + prev.identity_dissipation)
        worst = max(worst, cur.E_delta + acc - reports[0].E_delta)
    return worst if reports[1:] else 0.0


def gronwall_envelope_rate(reports: Sequence[EnergyReport]) -> float:
    """Smallest ``C`` with ``E_delta(t) <= (E_delta(0) + 1) exp(C t)`` along the run."""
    e0 = reports[0].E_delta
    rates = [math.log(r.E_delta / (e0 + 1.0)) / r.t for r in reports[1:] if r.t > 0 and r.E_delta > 0]
    return max([0.0] + rates)


# ---------------------------------------------------------------------------
# empirical functional inequalities
# ---------------------------------------------------------------------------


def band_limited_fields(grid: Grid, samples: int, *, max_wavenumber: int = 4, seed: int = 0):
    """Random Neumann cosine series with wavenumbers ``< max_wavenumber`` per axis.

    The coefficients depend only on ``seed`` and not on the grid, so two
    resolutions see the same continuum fields.
    """
    rng = np.random.default_rng(seed)
    K = max_wavenumber
    shape = (K,) * grid.dim
    decay = np.zeros(shape)
    for idx in np.ndindex(*shape):
        decay[idx] = 1.0 / (1.0 + sum(k * k for k in idx))
    basis = [
        np.stack([np.cos(k * math.pi * grid.centers(a) / grid.extents[a]) for k in range(K)]) for a in range(grid.dim)
    ]
    letters = "abc"[: grid.dim]
    operands = ",".join(f"{l}{l.upper()}" for l in letters)
    for _ in range(samples):
        coeff = rng.standard_normal(shape) * decay
        out = np.einsum(f"{letters},{operands}->{''.join(l.upper() for l in letters)}", coeff, *basis)
        yield out


def _lp(values: np.ndarray, p, vol: float) -> float:
    if p == math.inf:
        return float(np.abs(values).max())
    return float((np.sum(np.abs(values) ** p) * vol) ** (1.0 / p))


def _derivative_magnitude(u: np.ndarray, grid: Grid, order: int) -> np.ndarray:
    if order == 0:
        return np.abs(u)
    if order == 1:
        return np.sqrt(np.sum(dm.grad_array(u, grid, EVEN) ** 2, axis=0))
    if order == 2:
        return np.sqrt(np.sum(dm.hessian_array(u, grid, EVEN) ** 2, axis=(0, 1)))
    raise InvalidParameter(f"derivative order must be 0, 1 or 2, got {order}")


def nirenberg_alpha(dim: int, j: int, m: int, p, q, r) -> float:
    """Solve ``1/p = j/n + alpha (1/r - m/n) + (1 - alpha)/q`` for alpha."""
    inv = lambda s: 0.0 if s == math.inf else 1.0 / s
    slope = inv(r) - m / dim - inv(q)
    if slope == 0:
        raise InadmissibleExponents("exponent relation does not determine alpha")
    return (inv(p) - j / dim - inv(q)) / slope


def nirenberg_empirical(
    grid: Grid,
    samples: int,
    j: int = 1,
    m: int = 2,
    p=4,
    q=16,
    r=2,
    alpha: Optional[float] = None,
    *,
    q_tilde=4,
    seed: int = 0,
    max_wavenumber: int = 4,
) -> float:
    """Largest sampled ratio ``||D^j u||_p / (||D^m u||_r^a ||u||_q^(1-a) + ||u||_qt)``."""
    if alpha is None:
        alpha = nirenberg_alpha(grid.dim, j, m, p, q, r)
    inv = lambda s: 0.0 if s == math.inf else 1.0 / s
    defect = inv(p) - (j / grid.dim + alpha * (inv(r) - m / grid.dim) + (1 - alpha) * inv(q))
    if abs(defect) > 1e-12:
        raise InadmissibleExponents(f"1/p relation violated by {defect:.3g} for alpha = {alpha}")
    if not (m > 0 and j / m - 1e-12 <= alpha <= 1.0 + 1e-12):
        raise InadmissibleExponents(f"alpha = {alpha} outside [j/m, 1]")
    worst = 0.0
    for u in band_limited_fields(grid, samples, max_wavenumber=max_wavenumber, seed=seed):
        ratio = nirenberg_ratio(u, grid, j, m, p, q, r, alpha, q_tilde=q_tilde)
        if math.isnan(ratio):
            continue
        if not math.isfinite(ratio):
            raise InadmissibleExponents("sampled ratio is not finite")
        worst = max(worst, ratio)
    return worst


def nirenberg_ratio(u: np.ndarray, grid: Grid, j: int, m: int, p, q, r, alpha: float, *, q_tilde=4) -> float:
    vol = grid.cell_volume
    lhs = _lp(_derivative_magnitude(u, grid, j), p, vol)
    rhs = _lp(_derivative_magnitude(u, grid, m), r, vol) ** alpha * _lp(u, q, vol) ** (1 - alpha) + _lp(u, q_tilde, vol)
    if rhs == 0:
        return math.nan
    return lhs / rhs


def elliptic_ratio(u: np.ndarray, grid: Grid) -> float:
    vol = grid.cell_volume
    hess = math.sqrt(np.sum(dm.hessian_array(u, grid, EVEN) ** 2) * vol)
    lap = math.sqrt(np.sum(dm.lap_array(u, grid, EVEN) ** 2) * vol)
    grad = math.sqrt(np.sum(dm.grad_array(u, grid, EVEN) ** 2) * vol)
    if lap + grad == 0:
        return math.nan
    return hess / (lap + grad)


def elliptic_empirical(grid: Grid, samples: int, *, seed: int = 1, max_wavenumber: int = 4) -> float:
    """Largest sampled ``||D^2 u|| / (||lap u|| + ||grad u||)`` over Neumann fields; constants skipped."""
    worst = 0.0
    for u in band_limited_fields(grid, samples, max_wavenumber=max_wavenumber, seed=seed):
        ratio = elliptic_ratio(u, grid)
        if math.isnan(ratio):
            continue
        worst = max(worst, ratio)
    return worst


def epsilon0_from_constants(c0: float, c1: float, c2: float, c3: float) -> float:
    """Largest ``eps0 <= 1`` with ``sqrt(eps0) c3 (c1 sqrt(c2 c0) + 2 c2 c0) <= 1/4``."""
    for name, value in (("c0", c0), ("c1", c1), ("c2", c2), ("c3", c3)):
        if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
            raise BadConstants(f"{name} must be a positive finite number, got {value!r}")
    if c2 < 0.5 or c3 < 0.5:
        raise BadConstants(f"need c2 >= 1/2 and c3 >= 1/2, got c2 = {c2}, c3 = {c3}")
    root = 1.0 / (4.0 * c3 * (c1 * math.sqrt(c2 * c0) + 2.0 * c2 * c0))
    return min(1.0, root * root)


@dataclass
class Calibration:
    nirenberg: float
    elliptic: float
    c0: float
    c1: float
    c2: float
    c3: float
    eps0: float

    def as_dict(self) -> dict:
        return asdict(self)


def calibrate(grid: Grid, samples: int = 32, *, seed: int = 0) -> Calibration:
    """Measure the interpolation and elliptic constants and derive ``eps0``.

    ``c0 = sqrt(dim)`` bounds ``|d - e_N| / sqrt(eps0)``; the Nirenberg
    constant ``K`` and the elliptic constant ``c1`` combine into
    ``c2 = max(1/2, 16 K^4 c1^2 c0)``; ``c3`` takes its smallest allowed value 1/2.
    """
    K = nirenberg_empirical(grid, samples, seed=seed)
    c1 = elliptic_empirical(grid, samples, seed=seed + 1)
    c0 = math.sqrt(grid.dim)
    c2 = max(0.5, 16.0 * K**4 * c1**2 * c0)
    c3 = 0.5
    return Calibration(K, c1, c0, c1, c2, c3, epsilon0_from_constants(c0, c1, c2, c3))


# ---------------------------------------------------------------------------
# renormalized continuity residual
# ---------------------------------------------------------------------------


def renormalization_window(gamma: float, dim: int) -> float:
    """Upper bound on the power ``1 + lambda_1`` of admissible renormalizations."""
    return ((dim + 2) * gamma - dim) / (2.0 * dim)


def _b_functions(b_kind, gamma: Optional[float], dim: int):
    if b_kind == "xlogx":
        if gamma is not None and renormalization_window(gamma, dim) <= 1.0:
            raise InadmissibleB(f"s log s needs a growth window above 1; gamma = {gamma} gives {renormalization_window(gamma, dim):.4g}")
        return (lambda s: s * np.log(s)), (lambda s: np.log(s) + 1.0)
    if isinstance(b_kind, (tuple, list)) and len(b_kind) == 2 and b_kind[0] == "power":
        p = 1.0 + float(b_kind[1])
        if gamma is None:
            raise InadmissibleB("power renormalizations need gamma to check the growth window")
        W = renormalization_window(gamma, dim)
        if not 0.0 < p < W:
            raise InadmissibleB(f"power 1 + lambda_1 = {p} outside (0, {W:.4g})")
        return (lambda s: s**p), (lambda s: p * s ** (p - 1.0))
    raise InadmissibleB(f"unknown renormalization {b_kind!r}")


def cosine_weight(grid: Grid) -> np.ndarray:
    psi = np.ones(grid.counts)
    for a, x in enumerate(grid.mesh()):
        psi = psi * np.cos(math.pi * x / grid.extents[a])
    return psi


@dataclass
class RenormalizedResidual:
    residual: float
    commutator: float


def renormalized_residual(
    rho_seq: Sequence[ScalarField],
    v_seq: Sequence[VectorField],
    b_kind,
    *,
    eps: float,
    dt: Union[float, Sequence[float]],
    gamma: Optional[float] = None,
    detailed: bool = False,
):
    """Weak residual of the renormalized continuity equation along a discrete run.

    ``rho_seq`` holds ``rho_0 .. rho_K`` and ``v_seq`` the velocities used in
    the ``K`` steps.  Per step the residual is
    ``(b(rho_{k+1}) - b(rho_k))/dt + div(b v) + (rho b' - b) div v - eps b'(rho_{k+1}) lap rho_{k+1}``
    (advection at the old level, diffusion at the new one, as in the scheme),
    tested against ``prod cos(pi x_i / L_i)`` and integrated in time.  The
    maximum over time of its magnitude is returned.  The diffusion
    commutator ``eps (lap b - b' lap rho)`` is accumulated separately and
    returned with ``detailed=True``.
    """
    rho_seq, v_seq = list(rho_seq), list(v_seq)
    if len(rho_seq) != len(v_seq) + 1:
        raise InvalidParameter("need one more density than velocity in the sequences")
    grid = rho_seq[0].grid
    b, db = _b_functions(b_kind, gamma, grid.dim)
    dts = [float(dt)] * len(v_seq) if np.isscalar(dt) else [float(x) for x in dt]
    psi = cosine_weight(grid)
    vol = grid.cell_volume
    acc = comm = 0.0
    worst = worst_comm = 0.0
    for k, v in enumerate(v_seq):
        r0, r1 = rho_seq[k].values, rho_seq[k + 1].values
        b0, b1 = b(r0), b(r1)
        div_v = dm.div_array(v.values, grid, ODD)
        lap1 = dm.lap_array(r1, grid, EVEN)
        res = (b1 - b0) / dts[k] + mass_flux_divergence(b0, v.values, grid) + (r0 * db(r0) - b0) * div_v - eps * db(r1) * lap1
        acc += dts[k] * float(np.sum(res * psi) * vol)
        com = eps * (dm.lap_array(b1, grid, EVEN) - db(r1) * lap1)
        comm += dts[k] * float(np.sum(com * psi) * vol)
        worst, worst_comm = max(worst, abs(acc)), max(worst_comm, abs(comm))
    if detailed:
        return RenormalizedResidual(worst, worst_comm)
    return worst
