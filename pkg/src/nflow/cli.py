"""Command line entry point: ``nflow run|sweep|verify|basis``.

Exit status is 0 on success, 1 when a solver fails and 2 for configuration
or parameter errors.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from . import galerkin as gk
from .config import Config, from_dict, load_config
from .domain import write_snapshot
from .errors import ConfigInvalid, NflowError, SolverError
from .monitors import write_trace
from .run import simulate

EXIT_OK, EXIT_SOLVER, EXIT_CONFIG = 0, 1, 2

SUMMARY_COLUMNS = [
    "param", "value", "status", "t", "artificial_dissipation", "diss_delta_pressure",
    "diss_pressure", "delta_energy", "E_delta", "delta_energy_share", "halvings",
]


def build_id() -> str:
    """Content hash of the package sources, in the style of a git object id."""
    digest = hashlib.sha1()
    for path in sorted(Path(__file__).parent.glob("*.py")):
        digest.update(path.name.encode())
        digest.update(path.read_bytes())
    return f"nflow-{__version__}+{digest.hexdigest()[:12]}"


def _write_state(out: Path, state, tag: str) -> None:
    grid = state.grid
    write_snapshot(out / f"{tag}_rho.snap", grid, state.rho.values)
    for i in range(grid.dim):
        write_snapshot(out / f"{tag}_v{i + 1}.snap", grid, state.v.values[i])
        write_snapshot(out / f"{tag}_d{i + 1}.snap", grid, state.d.values[i])


def _json_safe(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def execute_run(cfg: Config, out: Path) -> dict:
    """Run ``cfg`` and write trace, metadata and snapshots into ``out``."""
    out.mkdir(parents=True, exist_ok=True)
    snap_dir = out / "snapshots"
    counter = {"step": 0}

    def on_step(state, report):
        counter["step"] += 1
        if cfg.snapshot_every and counter["step"] % cfg.snapshot_every == 0:
            snap_dir.mkdir(exist_ok=True)
            _write_state(snap_dir, state, f"step{counter['step']:06d}")

    start = time.perf_counter()
    result = simulate(cfg, on_step=on_step)
    write_trace(out / "trace.csv", result.reports)
    _write_state(out, result.state, "final")
    final = result.reports[-1]
    meta = {
        "config": {k: _json_safe(v) for k, v in cfg.as_dict().items()},
        "build": build_id(),
        "eps0": result.eps0,
        "calibration": result.calibration.as_dict() if result.calibration else None,
        "max_principle_tol": cfg.max_principle_tol if cfg.max_principle_tol is not None else cfg.default_max_principle_tol(),
        "basis_cache": str(gk.cache_path(cfg.grid(), cfg.modes, cfg.mu, cfg.lam)),
        "picard_dt_threshold": gk.picard_dt_threshold(result.basis, result.state.rho),
        "steps": len(result.dt_history),
        "halvings": result.halvings,
        "max_picard_sweeps": max(result.picard_sweeps, default=0),
        "max_picard_ratio": max(result.picard_ratios, default=0.0),
        "wall_seconds": time.perf_counter() - start,
    }
    (out / "metadata.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    return {
        "t": final.t,
        "artificial_dissipation": final.diss_delta_pressure + final.diss_pressure,
        "diss_delta_pressure": final.diss_delta_pressure,
        "diss_pressure": final.diss_pressure,
        "delta_energy": final.delta_energy,
        "E_delta": final.E_delta,
        "delta_energy_share": final.delta_energy / final.E_delta,
        "halvings": result.halvings,
    }


def _guard(fn, *args):
    try:
        fn(*args)
    except SolverError as exc:
        print(f"solver failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except NflowError as exc:
        print(f"config error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


def cmd_run(config: str, out: str) -> int:
    return _guard(lambda: execute_run(load_config(config), Path(out)))


def _sweep_leg(raw_cfg: dict, param: str, value: float, out: str) -> dict:
    row = {"param": param, "value": value}
    try:
        cfg = load_leg(raw_cfg, param, value)
        row.update(execute_run(cfg, Path(out)))
        row["status"] = "ok"
    except SolverError as exc:
        row["status"] = f"solver failure: {type(exc).__name__}"
    return row


def load_leg(raw_cfg: dict, param: str, value: float) -> Config:
    return from_dict({**raw_cfg, param: value})


def parse_values(text: str) -> list:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigInvalid(f"--values must be comma-separated numbers, got {text!r}") from None
    if not values:
        raise ConfigInvalid("--values is empty")
    if any(not (v > 0 and math.isfinite(v)) for v in values):
        raise ConfigInvalid("sweep values must be positive")
    if any(b >= a for a, b in zip(values, values[1:])):
        raise ConfigInvalid("sweep values must be strictly descending")
    return values


def cmd_sweep(config: str, param: str, values: str, out: str, jobs: int = 1) -> int:
    def body():
        if param not in ("eps", "delta"):
            raise ConfigInvalid(f"sweep parameter must be 'eps' or 'delta', got {param!r}")
        vals = parse_values(values)
        base = load_config(config)
        raw = dict(base.raw)
        for v in vals:  # validate every leg before running any
            load_leg(raw, param, v)
        root = Path(out)
        root.mkdir(parents=True, exist_ok=True)
        dirs = [str(root / f"{param}={v:g}") for v in vals]
        if jobs > 1 and len(vals) > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                rows = list(pool.map(_sweep_leg, [raw] * len(vals), [param] * len(vals), vals, dirs))
        else:
            rows = [_sweep_leg(raw, param, v, d) for v, d in zip(vals, dirs)]
        with open(root / "sweep-summary.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, SUMMARY_COLUMNS, lineterminator="\n")
            writer.writeheader()
            for row in rows:
                writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
        failed = [r for r in rows if r["status"] != "ok"]
        if failed:
            raise SolverError(f"{len(failed)} sweep leg(s) failed")

    return _guard(body)


def cmd_verify(out: str, max_principle_tol: Optional[float] = None) -> int:
    from . import verify

    results = verify.run_checks(max_principle_tol=max_principle_tol)
    table = verify.format_table(results)
    print(table)
    root = Path(out)
    root.mkdir(parents=True, exist_ok=True)
    (root / "verify.txt").write_text(table + "\n", encoding="utf-8")
    return EXIT_OK if all(r.passed for r in results) else EXIT_SOLVER


def cmd_basis(config: str, out: str) -> int:
    def body():
        cfg = load_config(config)
        grid = cfg.grid()
        basis = gk.lame_eigenbasis(grid, cfg.modes, cfg.mu, cfg.lam)
        root = Path(out)
        root.mkdir(parents=True, exist_ok=True)
        info = {
            "cache": str(gk.cache_path(grid, cfg.modes, cfg.mu, cfg.lam)),
            "n_modes": basis.n,
            "eigenvalues": basis.eigenvalues.tolist(),
        }
        (root / "basis.json").write_text(json.dumps(info, indent=2) + "\n", encoding="utf-8")
        print(info["cache"])

    return _guard(body)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nflow", description="Compressible nematic flow solver")
    parser.add_argument("--version", action="version", version=f"nflow {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one configuration")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("sweep", help="run a configuration over descending eps or delta values")
    p.add_argument("--config", required=True)
    p.add_argument("--param", required=True, choices=["eps", "delta"])
    p.add_argument("--values", required=True, help="comma-separated, strictly descending")
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("verify", help="run the self-check suite")
    p.add_argument("--out", required=True)
    p.add_argument("--max-principle-tol", type=float, default=None)

    p = sub.add_parser("basis", help="precompute the Lamé eigenbasis cache")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return cmd_run(args.config, args.out)
    if args.command == "sweep":
        return cmd_sweep(args.config, args.param, args.values, args.out, max(1, args.jobs))
    if args.command == "verify":
        return cmd_verify(args.out, args.max_principle_tol)
    return cmd_basis(args.config, args.out)


if __name__ == "__main__":
    sys.exit(main())
