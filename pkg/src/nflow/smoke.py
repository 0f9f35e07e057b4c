"""The standard smoke cases and their joint refinement levels.

Level ``k`` halves ``dt`` and ``h^2`` ``k`` times relative to level 0, so the
cell counts grow by ``sqrt(2)`` per level (rounded).
"""

from __future__ import annotations

import math

from .config import Config, from_dict

BASE_2D = {
    "dim": 2,
    "extents": [1.0, 1.0],
    "counts": [64, 64],
    "mu": 1.0, "lambda": 0.0, "nu": 1.0, "theta": 1.0, "A": 1.0, "gamma": 1.4,
    "eps": 1e-2, "delta": 1e-3, "beta": 8.0, "n_modes": 32,
    "dt": 5e-4, "t_end": 0.05,
    "rho0": "1 + 0.1*cos(pi*x)*cos(pi*y)",
    "v0": ["0.5*sin(pi*x)**2*sin(2*pi*y)", "-0.5*sin(2*pi*x)*sin(pi*y)**2"],
    "tilt": "0.3*cos(pi*x)*cos(pi*y)",
    "eps0": 0.05,
}

BASE_3D = {
    "dim": 3,
    "extents": [1.0, 1.0, 1.0],
    "counts": [12, 12, 12],
    "mu": 1.0, "lambda": 0.0, "nu": 1.0, "theta": 1.0, "A": 1.0, "gamma": 1.6,
    "eps": 1e-2, "delta": 1e-3, "beta": 8.0, "n_modes": 48,
    "dt": 1e-3, "t_end": 0.05,
    "rho0": "1 + 0.1*cos(pi*x)*cos(pi*y)*cos(pi*z)",
    "v0": [
        "0.5*sin(pi*x)**2*sin(2*pi*y)*sin(pi*z)",
        "-0.5*sin(2*pi*x)*sin(pi*y)**2*sin(pi*z)",
        "0.2*sin(pi*x)*sin(pi*y)*sin(pi*z)",
    ],
    "tilt": "0.3*cos(pi*x)*cos(pi*y)*cos(pi*z)",
    "azimuth": "pi*y",
    "eps0": 0.05,
}


def smoke_dict(dim: int, level: int = 0, **overrides) -> dict:
    """Smoke case at refinement ``level``; ``counts`` and ``dt`` overrides set level 0."""
    base = dict(BASE_2D if dim == 2 else BASE_3D)
    base.update(overrides)
    scale = math.sqrt(2.0) ** level
    base["counts"] = [int(round(n * scale)) for n in base["counts"]]
    base["dt"] = base["dt"] / 2**level
    return base


def smoke_config(dim: int, level: int = 0, **overrides) -> Config:
    return from_dict(smoke_dict(dim, level, **overrides))
