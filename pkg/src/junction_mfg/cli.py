"""Command-line entry point: ``solve-hj``, ``mfg``, ``verify`` and ``scenarios``.

Exit codes: 0 success, 2 configuration error, 3 verification failure.
Artifacts are deterministic: floats are written with 17 significant digits and
no wall-clock or random state enters any output.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import verify as suites
from .config import SCENARIOS, ConfigError, ExperimentConfig, load_config, parse_config, validate_mfg
from .costs import sample_costs
from .hj import backward_solve, dpp_residual, value_bound, viscosity_residual
from .mfg import marginal_flow, solve_equilibrium
from .network import DomainError

logger = logging.getLogger("junction_mfg")

EXIT_OK, EXIT_CONFIG, EXIT_VERIFY = 0, 2, 3


def fmt(x: float) -> str:
    return f"{float(x):.17g}"


def _clean(obj):
    """Round-trip floats through 17 significant digits for stable JSON."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return float(fmt(x)) if np.isfinite(x) else str(x)
    return obj


def write_json(path: Path, payload: dict) -> None:
    # one level of indentation keeps long curves on a single line
    body = {k: json.dumps(v, sort_keys=True) for k, v in sorted(_clean(payload).items())}
    lines = ",\n".join(f"  {json.dumps(k)}: {v}" for k, v in body.items())
    path.write_text("{\n" + lines + "\n}\n")


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def write_value_csv(path: Path, u) -> None:
    """Rows ``edge,r,t,u``: time-major, then edge (0 is the vertex), then radius."""
    grid = u.grid
    r = grid.radii
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["edge", "r", "t", "u"])
        for k, t in enumerate(grid.times):
            ts = fmt(t)
            w.writerow(["0", "0", ts, fmt(u.values[k, 0, 0])])
            for i in range(grid.num_edges):
                for j in range(1, grid.num_nodes + 1):
                    w.writerow([str(i + 1), fmt(r[j]), ts, fmt(u.values[k, i, j])])


def write_residual_csv(path: Path, grid, edge_res, vertex_res) -> None:
    r = grid.radii
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["edge", "r", "t", "residual"])
        for k in range(grid.num_steps):
            ts = fmt(grid.times[k])
            w.writerow(["0", "0", ts, fmt(vertex_res[k])])
            for i in range(grid.num_edges):
                for j in range(1, grid.num_nodes + 1):
                    w.writerow([str(i + 1), fmt(r[j]), ts, fmt(edge_res[k, i, j - 1])])


def write_flow_csv(path: Path, flow) -> None:
    """Rows ``t,edge,bin_lo,bin_hi,mass``; the vertex atom is ``t,0,0,0,mass``."""
    grid = flow.grid
    r = grid.radii
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["t", "edge", "bin_lo", "bin_hi", "mass"])
        for k, t in enumerate(grid.times):
            ts = fmt(t)
            w.writerow([ts, "0", "0", "0", fmt(flow.vertex[k])])
            for i in range(grid.num_edges):
                for j in range(1, grid.num_nodes + 1):
                    w.writerow([ts, str(i + 1), fmt(r[j - 1]), fmt(r[j]), fmt(flow.edges[k, i, j - 1])])


def write_trajectories_csv(path: Path, mu) -> None:
    """Rows ``particle,weight,t,edge,r,speed`` (speed of the step leaving that sample)."""
    grid = mu.grid
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["particle", "weight", "t", "edge", "r", "speed"])
        for p, (weight, traj) in enumerate(mu.particles):
            ws = fmt(weight)
            for k in range(grid.num_steps + 1):
                a = traj.speeds[k] if k < traj.num_steps else 0.0
                w.writerow([str(p), ws, fmt(grid.times[k]), str(int(traj.edges[k])), fmt(traj.radii[k]), fmt(a)])


def _grid_summary(cfg: ExperimentConfig, grid) -> dict:
    return {
        "requested_dr": cfg.grid.dr,
        "requested_dt": cfg.grid.dt,
        "dr": grid.dr,
        "dt": grid.dt,
        "adjusted": grid.adjusted,
        "nodes_per_edge": grid.num_nodes,
        "time_steps": grid.num_steps,
    }


def run_solve_hj(cfg: ExperimentConfig, out: Path) -> int:
    grid = cfg.build_grid()
    if grid.adjusted:
        logger.warning("grid adjusted to dr=%s dt=%s", grid.dr, grid.dt)
    costs = cfg.build_costs()
    u = backward_solve(grid, costs)
    edge_res, vertex_res = viscosity_residual(u, costs)
    bound = value_bound(grid, costs)
    dpp = max(dpp_residual(u, costs, k) for k in range(grid.num_steps))
    r = grid.radii[1:]
    interior = (r > 2 * grid.dr + 1e-12) & (r < grid.geometry.edge_truncation - 1e-12)
    out.mkdir(parents=True, exist_ok=True)
    if "value" in cfg.outputs.emit:
        write_value_csv(out / "value.csv", u)
    if "residual" in cfg.outputs.emit:
        write_residual_csv(out / "residual.csv", grid, edge_res, vertex_res)
    summary = {
        "command": "solve-hj",
        "scenario": cfg.scenario,
        "grid": _grid_summary(cfg, grid),
        "max_abs_u": u.max_abs(),
        "value_bound": bound,
        "bound_ok": u.max_abs() <= bound + 1e-12,
        "max_interior_residual": float(np.abs(edge_res[:, :, interior]).max()) if interior.any() else 0.0,
        "max_vertex_residual": float(np.abs(vertex_res).max()),
        "max_dpp_residual": dpp,
        "u_vertex_t0": float(u.values[0, 0, 0]),
    }
    write_json(out / "summary.json", summary)
    return EXIT_OK


def run_mfg(cfg: ExperimentConfig, out: Path) -> int:
    checks = validate_mfg(cfg)
    grid = cfg.build_grid()
    f = cfg.build_functor()
    m0 = cfg.build_initial()
    s = cfg.solver
    mu, log = solve_equilibrium(f, m0, grid, s.particles, s.tol, s.max_iter, check_holder=True)
    flow = marginal_flow(mu)
    mass = flow.total_mass()
    t = grid.times
    k07 = int(round(0.7 / grid.dt))
    out.mkdir(parents=True, exist_ok=True)
    if "flow" in cfg.outputs.emit:
        write_flow_csv(out / "flow.csv", flow)
    if "trajectories" in cfg.outputs.emit:
        write_trajectories_csv(out / "trajectories.csv", mu)
    if "iterations" in cfg.outputs.emit:
        with open(out / "iterations.jsonl", "w") as fh:
            for e in log.entries:
                row = {"iter": e["iter"], "exploitability": e["exploitability"], "w1_step": e["w1_step"]}
                fh.write(json.dumps(_clean(row), sort_keys=True) + "\n")
    tables = sample_costs(f.base, grid)
    summary = {
        "command": "mfg",
        "scenario": cfg.scenario,
        "grid": _grid_summary(cfg, grid),
        "converged": log.converged,
        "iterations": len(log.entries) - 1,
        "returned_iterate": log.best_iter,
        "final_exploitability": log.final_exploitability,
        "particles": s.particles,
        "distinct_paths": len(mu),
        "snap_distance": log.snap_distance,
        "c_bound": mu.c_bound,
        "truncation_check": checks,
        "max_mass_error": float(np.abs(mass - 1.0).max()),
        "max_holder_ratio": max(e["holder_ratio"] for e in log.entries),
        "base_running_bound": tables.running_bound,
        "vertex_mass": {"t": [float(x) for x in t], "mass": [float(x) for x in flow.vertex]},
        "vertex_mass_at_0.7": float(flow.vertex[k07]) if k07 <= grid.num_steps else None,
    }
    write_json(out / "summary.json", summary)
    return EXIT_OK


def run_verify(cfg: ExperimentConfig, out: Path, suite: str | None = None, threads: int = 1) -> int:
    suite = suite or cfg.verify.suite
    n = cfg.verify.instances
    report = {}
    if suite in ("oracle", "all"):
        report["oracle"] = suites.oracle_suite(n, threads)
    if suite in ("w1", "all"):
        report["w1"] = suites.w1_suite(max(n, 100) if suite == "all" else n)
    if suite in ("dpp", "all"):
        report["dpp"] = suites.dpp_suite(cfg.build_grid(), cfg.build_functor())
    if suite in ("holder", "all"):
        validate_mfg(cfg)
        s = cfg.solver
        report["holder"] = suites.holder_suite(
            cfg.build_functor(), cfg.build_initial(), cfg.build_grid(), s.particles, s.tol, s.max_iter
        )
    ok = all(r["pass"] for r in report.values())
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "verify.json", {"suite": suite, "scenario": cfg.scenario, "pass": ok, "results": report})
    return EXIT_OK if ok else EXIT_VERIFY


def _load(args) -> ExperimentConfig:
    if args.config:
        cfg = load_config(args.config)
        if args.scenario:
            raise ConfigError("--scenario", "give either --config or --scenario")
        return cfg
    if args.scenario:
        return parse_config({"scenario": args.scenario})
    raise ConfigError("--config", "a configuration file or --scenario is required")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="junction-mfg", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("solve-hj", "solve the junction HJ problem and write value/residual CSVs"),
        ("mfg", "compute a mean field game equilibrium by fictitious play"),
        ("verify", "run invariant suites and write verify.json"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", type=Path, help="JSON experiment configuration")
        p.add_argument("--scenario", choices=sorted(SCENARIOS), help="use a preset instead of --config")
        p.add_argument("--out", type=Path, help="output directory (overrides outputs.directory)")
        p.add_argument("--threads", type=int, default=1, help="worker threads; never changes output bytes")
        if name == "verify":
            p.add_argument("--suite", choices=["oracle", "w1", "holder", "dpp", "all"])
    sub.add_parser("scenarios", help="list scenario presets")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "scenarios":
        for name, s in SCENARIOS.items():
            kinds = "solve-hj, mfg" if s["mfg"] else "solve-hj"
            print(f"{name:24s} [{kinds}] {s['description']}")
        return EXIT_OK
    try:
        cfg = _load(args)
        out = args.out or Path(cfg.outputs.directory)
        if args.threads < 1:
            raise ConfigError("--threads", "must be >= 1")
        if args.command == "solve-hj":
            return run_solve_hj(cfg, out)
        if args.command == "mfg":
            return run_mfg(cfg, out)
        return run_verify(cfg, out, args.suite, args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DomainError as exc:
        print(f"domain error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
