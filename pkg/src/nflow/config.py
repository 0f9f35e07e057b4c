"""Flat JSON run configuration with validation and documented defaults.

Keys (defaults in brackets):

* grid: ``dim``, ``extents``, ``counts``
* physics: ``mu``, ``lambda``, ``nu``, ``theta``, ``A``, ``gamma``
* regularization: ``eps``, ``delta``, ``beta``, ``n_modes`` [32 in 2D, 48 in 3D]
* time: ``dt``, ``t_end``
* initial data (expression strings over x, y, z): ``rho0``, ``v0`` (one string
  or one per component), ``tilt``, ``azimuth`` [0], ``rho_lower`` [0], ``rho_upper`` [inf]
* tolerances: ``eps0`` [calibrated on the grid], ``picard_tol`` [1e-9],
  ``picard_maxit`` [50], ``linear_rtol`` [1e-11], ``max_principle_tol``
  [5 (dt + h^2)], ``max_halvings`` [6]
* options: ``project_director`` [false], ``gradient_coeff`` ["nu"],
  ``snapshot_every`` [0, final state only], ``calibration_samples`` [32]

Keys starting with an underscore are ignored, so they can carry comments.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Union

from .domain import Grid, build_grid
from .errors import ConfigInvalid, NflowError
from .model import InitialData, PhysParams, RegParams, make_initial_data

REQUIRED = (
    "dim", "extents", "counts", "mu", "lambda", "nu", "theta", "A", "gamma",
    "eps", "delta", "beta", "dt", "t_end", "rho0", "v0", "tilt",
)


@dataclass(frozen=True)
class Config:
    dim: int
    extents: tuple
    counts: tuple
    mu: float
    lam: float
    nu: float
    theta: float
    A: float
    gamma: float
    eps: float
    delta: float
    beta: float
    dt: float
    t_end: float
    rho0: Union[str, float]
    v0: tuple
    tilt: Union[str, float]
    n_modes: Optional[int] = None
    azimuth: Union[str, float] = 0.0
    rho_lower: float = 0.0
    rho_upper: float = math.inf
    eps0: Optional[float] = None
    picard_tol: float = 1e-9
    picard_maxit: int = 50
    linear_rtol: float = 1e-11
    max_principle_tol: Optional[float] = None
    max_halvings: int = 6
    project_director: bool = False
    gradient_coeff: str = "nu"
    snapshot_every: int = 0
    calibration_samples: int = 32
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def modes(self) -> int:
        return self.n_modes if self.n_modes is not None else (32 if self.dim == 2 else 48)

    def grid(self) -> Grid:
        return build_grid(self.dim, self.extents, self.counts)

    def phys(self) -> PhysParams:
        return PhysParams(self.mu, self.lam, self.nu, self.theta, self.A, self.gamma, dim=self.dim)

    def reg(self) -> RegParams:
        return RegParams(self.eps, self.delta, self.beta, self.modes, gamma=self.gamma, dim=self.dim)

    def default_max_principle_tol(self) -> float:
        h = min(self.extents[k] / self.counts[k] for k in range(self.dim))
        return 5.0 * (self.dt + h * h)

    def initial_data(self, grid: Grid, eps0: float) -> InitialData:
        return make_initial_data(
            grid, self.rho0, list(self.v0), self.tilt, eps0,
            azimuth_expr=self.azimuth, rho_lower=self.rho_lower, rho_upper=self.rho_upper,
        )

    def with_values(self, **changes) -> "Config":
        raw = dict(self.raw)
        for k, v in changes.items():
            raw["lambda" if k == "lam" else k] = v
        return from_dict(raw)

    def as_dict(self) -> dict:
        out = {}
        for f in fields(self):
            if f.name == "raw":
                continue
            value = getattr(self, f.name)
            out["lambda" if f.name == "lam" else f.name] = list(value) if isinstance(value, tuple) else value
        if out["rho_upper"] == math.inf:
            out["rho_upper"] = None
        return out


_NUMERIC = {
    "mu", "lambda", "nu", "theta", "A", "gamma", "eps", "delta", "beta", "dt", "t_end",
    "rho_lower", "rho_upper", "eps0", "picard_tol", "linear_rtol", "max_principle_tol",
}
_INTEGER = {"dim", "n_modes", "picard_maxit", "max_halvings", "snapshot_every", "calibration_samples"}
_EXPR = {"rho0", "tilt", "azimuth"}
_KNOWN = set(REQUIRED) | _NUMERIC | _INTEGER | _EXPR | {"v0", "project_director", "gradient_coeff"}


def _is_number(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def from_dict(raw: dict) -> Config:
    if not isinstance(raw, dict):
        raise ConfigInvalid("config must be a JSON object")
    data = {k: v for k, v in raw.items() if not k.startswith("_")}
    unknown = sorted(set(data) - _KNOWN)
    if unknown:
        raise ConfigInvalid(f"unknown config keys: {', '.join(unknown)}")
    missing = [k for k in REQUIRED if k not in data]
    if missing:
        raise ConfigInvalid(f"missing config keys: {', '.join(missing)}")
    for k, v in data.items():
        if isinstance(v, dict):
            raise ConfigInvalid(f"config must be flat; key {k!r} holds an object")
        if k in _NUMERIC and v is not None and not _is_number(v):
            raise ConfigInvalid(f"{k} must be a number, got {v!r}")
        if k in _INTEGER and v is not None and (not _is_number(v) or int(v) != v):
            raise ConfigInvalid(f"{k} must be an integer, got {v!r}")
        if k in _EXPR and not (_is_number(v) or isinstance(v, str)):
            raise ConfigInvalid(f"{k} must be an expression string or a number, got {v!r}")
    dim = int(data["dim"])
    for k in ("extents", "counts"):
        if not isinstance(data[k], list) or len(data[k]) != dim or not all(_is_number(x) for x in data[k]):
            raise ConfigInvalid(f"{k} must be a list of {dim} numbers")
    v0 = data["v0"]
    if isinstance(v0, (str, int, float)) and not isinstance(v0, bool):
        v0 = [v0] * dim
    if not isinstance(v0, list) or len(v0) != dim:
        raise ConfigInvalid(f"v0 must be one expression or a list of {dim}")
    if data.get("gradient_coeff", "nu") not in ("nu", "nu_theta"):
        raise ConfigInvalid("gradient_coeff must be 'nu' or 'nu_theta'")
    for k in ("dt", "t_end"):
        if not data[k] > 0:
            raise ConfigInvalid(f"{k} > 0 violated: {k} = {data[k]}")
    kwargs = {("lam" if k == "lambda" else k): v for k, v in data.items()}
    kwargs["extents"] = tuple(float(x) for x in data["extents"])
    kwargs["counts"] = tuple(int(x) for x in data["counts"])
    kwargs["v0"] = tuple(v0)
    if kwargs.get("rho_upper") is None:
        kwargs["rho_upper"] = math.inf
    for k in _INTEGER:
        key = "lam" if k == "lambda" else k
        if kwargs.get(key) is not None:
            kwargs[key] = int(kwargs[key])
    cfg = Config(**kwargs, raw=dict(raw))
    try:  # surface every parameter violation as a config error
        cfg.grid()
        cfg.phys()
        cfg.reg()
    except NflowError as exc:
        raise ConfigInvalid(str(exc)) from None
    return cfg


def load_config(path) -> Config:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigInvalid(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"config {path} is not valid JSON: {exc}") from None
    return from_dict(raw)
