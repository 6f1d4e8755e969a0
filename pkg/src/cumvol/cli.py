"""Command-line front end.

Subcommands:

* ``evolve``          -- density of log cumulative production per time step
* ``volatility``      -- reversed recursion + growth-increment densities
* ``compare-saddle``  -- exact-vs-narrow-formula ratio over a noise sweep
* ``simulate``        -- Monte Carlo oracle, optionally checked against a run

Exit codes: 0 success, 2 usage error, 3 numerical-invariant failure,
4 domain-validity failure. Every run writes a manifest.json listing the
produced files plus convergence and truncation diagnostics; data files are
written atomically (temp file + rename). CUMVOL_THREADS caps the number of
worker threads used for sweep points.
"""

from __future__ import annotations

import argparse
import datetime
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__
from .errors import ConvergenceError, DomainError, MassDefectError
from .evolution import (
    EvolutionConfig,
    default_y_grid,
    default_z_grid,
    evolve_y,
    evolve_z,
    steady_state_volatility,
    volatility_pdf,
)
from .montecarlo import empirical_cdf_distance, simulate
from .noise import gaussian, parse_noise_spec
from .pdfgrid import GriddedPdf, atomic_write_text, cell_grid

DEFAULT_GRID_POINTS = 8192


# ----------------------------------------------------------------------
# argument helpers
# ----------------------------------------------------------------------


def _noise_arg(text: str):
    try:
        return parse_noise_spec(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _grid_arg(text: str):
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("--grid expects min,max,n")
    try:
        lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise argparse.ArgumentTypeError("--grid expects numbers min,max,n")
    if lo != 0.0:
        raise argparse.ArgumentTypeError("--grid must start at 0 (densities live on [0, max])")
    if not hi > lo:
        raise argparse.ArgumentTypeError("--grid needs max > min")
    if n < 16:
        raise argparse.ArgumentTypeError("--grid needs n >= 16")
    return lo, hi, n


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError("value must be >= 1")
    return value


def _sweep_arg(text: str):
    items = [p for p in (s.strip() for s in text.split(",")) if p]
    if not items:
        raise argparse.ArgumentTypeError("--sigma-sweep must list at least one variance")
    try:
        values = [float(p) for p in items]
    except ValueError:
        raise argparse.ArgumentTypeError("--sigma-sweep expects comma-separated numbers")
    if any(v <= 0 for v in values):
        raise argparse.ArgumentTypeError("--sigma-sweep variances must be positive")
    return values


def _thread_count() -> int:
    raw = os.environ.get("CUMVOL_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _write_json(path: Path, payload: dict) -> None:
    atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _manifest(command: str, args_dict: dict, outputs: list, extra: dict, out_dir: Path) -> None:
    payload = {
        "command": command,
        "tool": "cumvol",
        "version": __version__,
        "created_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "config": args_dict,
        "outputs": outputs,
    }
    payload.update(extra)
    _write_json(out_dir / "manifest.json", payload)
    for name in outputs:
        p = out_dir / name
        if not p.exists() or p.stat().st_size == 0:
            raise MassDefectError(f"output file {name} missing or empty")


# ----------------------------------------------------------------------
# commands
# ----------------------------------------------------------------------


def cmd_evolve(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.grid is not None:
        _, hi, n = args.grid
        grid = cell_grid(hi, n)
    else:
        grid = default_z_grid(args.g, args.noise, args.steps, n_points=DEFAULT_GRID_POINTS)
    config = EvolutionConfig(g=args.g, noise=args.noise, grid=grid,
                             horizon=args.steps, convergence_tol=args.tol)
    trace = evolve_z(config)

    outputs = []
    rows = trace.step_rows()
    for rec, row in zip(trace.steps, rows):
        name = f"rho_z_t{rec.t:04d}.csv"
        rec.pdf.to_csv(out_dir / name)
        row["file"] = name
        outputs.append(name)
    _manifest("evolve", _echo(args), outputs, {
        "grid": {"x_min": grid.x_min, "x_max": grid.x_max, "n_points": grid.n_points},
        "convergence": {"converged_at": trace.converged_at, "tol": args.tol,
                        "mode": "mean-centered L1"},
        "steps": rows,
    }, out_dir)
    print(f"evolve: wrote {len(outputs)} density files to {out_dir}")
    return 0


def cmd_volatility(args) -> int:
    if args.until_converged and not args.g > 0.0:
        raise DomainError("--until-converged requires g > 0 (no fixed point otherwise)")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.grid is not None:
        _, hi, n = args.grid
        grid = cell_grid(hi, n)
    elif args.g > 0.0:
        grid = default_y_grid(args.g, args.noise, n_points=DEFAULT_GRID_POINTS)
    else:
        raise DomainError("g <= 0 needs an explicit --grid for the reversed variable")
    horizon = args.max_steps if args.until_converged else args.steps
    config = EvolutionConfig(g=args.g, noise=args.noise, grid=grid,
                             horizon=horizon, convergence_tol=args.tol)
    trace = evolve_y(config)
    if args.until_converged and trace.converged_at is None:
        raise ConvergenceError(
            f"reversed recursion did not converge within {horizon} steps at tol {args.tol:g}"
        )

    outputs = []
    rows = []
    for rec in trace.steps:
        dz = volatility_pdf(rec.pdf)
        name = f"rho_dz_t{rec.t:04d}.csv"
        dz.to_csv(out_dir / name)
        outputs.append(name)
        rows.append({
            "t": rec.t,
            "file": name,
            "dz_mean": dz.mean(),
            "dz_variance": dz.variance(),
            "truncated_mass": dz.truncated_mass,
            "y_l1_prev": rec.l1_prev,
        })

    report = None
    if args.g > 0.0 and trace.converged_at is not None:
        report = steady_state_volatility(config).to_dict()
        _write_json(out_dir / "volatility_report.json", report)
        outputs.append("volatility_report.json")

    _manifest("volatility", _echo(args), outputs, {
        "grid": {"x_min": grid.x_min, "x_max": grid.x_max, "n_points": grid.n_points},
        "convergence": {"converged_at": trace.converged_at, "tol": args.tol,
                        "mode": "raw L1"},
        "steps": rows,
    }, out_dir)
    print(f"volatility: wrote {len(outputs)} files to {out_dir}")
    return 0


def _sweep_point(g: float, sigma_sq: float, tol: float, horizon: int) -> dict:
    noise = gaussian(math.sqrt(sigma_sq))
    config = EvolutionConfig(g=g, noise=noise, grid=default_y_grid(g, noise),
                             horizon=horizon, convergence_tol=tol)
    rep = steady_state_volatility(config)
    return {
        "sigma_a_sq": sigma_sq,
        "ratio": rep.ratio_to_narrow,
        "variance": rep.variance,
        "narrow_variance": rep.narrow_variance,
        "converged_at": rep.converged_at,
        "truncated_mass": rep.truncated_mass,
    }


def cmd_compare_saddle(args) -> int:
    if not args.g > 0.0:
        raise DomainError("compare-saddle requires g > 0")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    workers = min(_thread_count(), len(args.sigma_sweep))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(
                lambda s2: _sweep_point(args.g, s2, args.tol, args.max_steps),
                args.sigma_sweep,
            ))
    else:
        rows = [_sweep_point(args.g, s2, args.tol, args.max_steps)
                for s2 in args.sigma_sweep]

    lines = ["sigma_a_sq,ratio,variance,narrow_variance,truncated_mass\n"]
    for r in rows:
        lines.append(
            f"{r['sigma_a_sq']:.17g},{r['ratio']:.17g},{r['variance']:.17g},"
            f"{r['narrow_variance']:.17g},{r['truncated_mass']:.17g}\n"
        )
    atomic_write_text(out_dir / "saddle_ratio.csv", "".join(lines))
    _manifest("compare-saddle", _echo(args), ["saddle_ratio.csv"],
              {"points": rows}, out_dir)
    print(f"compare-saddle: wrote saddle_ratio.csv to {out_dir}")
    return 0


def cmd_simulate(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    ensemble = simulate(args.g, args.noise, t_max=args.steps, n_paths=args.paths,
                        seed=args.seed)
    outputs = []
    _write_json(out_dir / "summary.json", ensemble.summary())
    outputs.append("summary.json")

    if args.paths_csv:
        cap = min(args.paths, 10_000)
        header = "path," + ",".join(f"z{t}" for t in range(args.steps + 1)) + "\n"
        lines = [header]
        for i in range(cap):
            lines.append(f"{i}," + ",".join(f"{v:.17g}" for v in ensemble.z[i]) + "\n")
        atomic_write_text(out_dir / "paths.csv", "".join(lines))
        outputs.append("paths.csv")

    extra: dict = {"paths_csv_capped_at": 10_000 if args.paths_csv else None}
    if args.against is not None:
        ref = Path(args.against) / "manifest.json"
        if not ref.exists():
            raise DomainError(f"--against directory {args.against} has no manifest.json")
        manifest = json.loads(ref.read_text(encoding="utf-8"))
        ks_rows = []
        for row in manifest.get("steps", []):
            t = row["t"]
            if t > args.steps or "file" not in row:
                continue
            pdf = GriddedPdf.from_csv(Path(args.against) / row["file"],
                                      truncated_mass=row.get("truncated_mass", 0.0))
            ks_rows.append({"t": t, "ks": empirical_cdf_distance(ensemble, t, pdf)})
        _write_json(out_dir / "ks_report.json", {"against": str(args.against),
                                                 "ks_per_step": ks_rows})
        outputs.append("ks_report.json")
        extra["ks_max"] = max((r["ks"] for r in ks_rows), default=None)

    _manifest("simulate", _echo(args), outputs, extra, out_dir)
    print(f"simulate: wrote {len(outputs)} files to {out_dir}")
    return 0


def _echo(args) -> dict:
    skip = {"func"}
    out = {}
    for key, value in vars(args).items():
        if key in skip:
            continue
        out[key] = value.label() if hasattr(value, "label") else value
    return out


# ----------------------------------------------------------------------
# parser / entry point
# ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cumvol",
        description="Exact distribution dynamics of log cumulative production "
                    "and its volatility under i.i.d. production noise.",
    )
    parser.add_argument("--version", action="version", version=f"cumvol {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--g", type=float, required=True, help="drift per time step")
    common.add_argument("--noise", type=_noise_arg, required=True,
                        help="gaussian:sigma=S | lorentzian:gamma=G | table:PATH")
    common.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("evolve", parents=[common],
                       help="evolve the density of log cumulative production")
    p.add_argument("--steps", type=_positive_int, required=True)
    p.add_argument("--grid", type=_grid_arg, default=None,
                   help="min,max,n with min=0; default sized from the drift and "
                        f"noise width with {DEFAULT_GRID_POINTS} points")
    p.add_argument("--tol", type=float, default=1e-15,
                   help="mean-centered L1 tolerance for an early steady-state stop")
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("volatility", parents=[common],
                       help="evolve the reversed variable and emit growth-increment densities")
    p.add_argument("--steps", type=_positive_int, default=50)
    p.add_argument("--grid", type=_grid_arg, default=None)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--until-converged", action="store_true",
                   help="iterate to the fixed point (requires g > 0)")
    p.add_argument("--max-steps", type=_positive_int, default=10_000)
    p.set_defaults(func=cmd_volatility)

    p = sub.add_parser("compare-saddle",
                       help="ratio of exact steady-state volatility to the narrow-noise formula")
    p.add_argument("--g", type=float, required=True)
    p.add_argument("--sigma-sweep", type=_sweep_arg, required=True,
                   help="comma-separated noise variances sigma_a^2")
    p.add_argument("--out", required=True)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--max-steps", type=_positive_int, default=10_000)
    p.set_defaults(func=cmd_compare_saddle)

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo path oracle")
    p.add_argument("--paths", type=_positive_int, required=True)
    p.add_argument("--steps", type=_positive_int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--paths-csv", action="store_true",
                   help="also write per-path z values (capped at 10000 paths)")
    p.add_argument("--against", default=None,
                   help="directory of a previous evolve run to compare against (KS per step)")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DomainError as exc:
        print(f"cumvol: domain error: {exc}", file=sys.stderr)
        return 4
    except (MassDefectError, ConvergenceError) as exc:
        print(f"cumvol: numerical failure: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"cumvol: invalid input: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
