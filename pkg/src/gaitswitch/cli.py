"""Command-line pipeline: design-base, continuum, analyze, graph, plan,
run, export.

Each command reads the configuration plus prior-stage artifacts and writes
its own artifact; exit code 0 on success, 2 for a missing prerequisite
artifact, 1 for any other failure, always with a machine-readable JSON
error on stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from . import artifacts as art
from .design import (
    DesignConfig,
    design_base_gait,
    generate_continuum,
)
from .graph import SwitchGraph, build_graph, plan_path, strongly_connected, theorem2_check
from .model import Biped, GaitswitchError
from .supervisor import SpeedSchedule, supervise


def _emit_error(exc: Exception) -> int:
    payload = {"error": type(exc).__name__, "message": str(exc)}
    code = 1
    if isinstance(exc, art.MissingArtifactError):
        payload["required_command"] = exc.required_command
        payload["path"] = exc.path
        code = 2
    print(json.dumps(payload), file=sys.stderr)
    return code


def _setup(args):
    cfg = art.load_config(args.config)
    biped = Biped(art.model_from_config(cfg))
    ctrl = art.controller_from_config(cfg)
    sim = art.sim_from_config(cfg)
    return cfg, biped, ctrl, sim


def cmd_design_base(args) -> int:
    cfg, biped, ctrl, sim = _setup(args)
    dcfg_kwargs = dict(cfg.get("design", {}))
    if args.target is not None:
        dcfg_kwargs["target_speed"] = args.target
    dcfg = DesignConfig(**dcfg_kwargs)
    t0 = time.time()
    gait, record, diag = design_base_gait(biped, dcfg, ctrl, sim)
    art.save_gait(args.out, gait, record, provenance={
        "elapsed_s": time.time() - t0,
        "design": diag,
        "model_hash": art.model_hash(biped.params),
    })
    print(f"base gait: speed {record.speed:.4f} m/s, contraction {record.delta2:.6f}, "
          f"spectral radius {record.spectral_radius:.6f}")
    print(f"wrote {args.out} ({time.time() - t0:.1f} s)")
    return 0


def cmd_continuum(args) -> int:
    cfg, biped, ctrl, sim = _setup(args)
    gait, record = art.load_gait(args.base)
    if record is None:
        raise GaitswitchError("base gait file carries no certification record")
    ccfg = cfg.get("continuum", {})
    lo = args.lo if args.lo is not None else ccfg.get("speed_lo", record.speed - 0.12)
    hi = args.hi if args.hi is not None else ccfg.get("speed_hi", record.speed + 0.12)
    gap = args.gap if args.gap is not None else ccfg.get("max_gap", 0.01)
    t0 = time.time()
    family, report = generate_continuum(gait, record, biped, lo, hi, gap, ctrl, sim)
    art.save_family(args.out, family)
    print(f"family: {len(family)} gaits, speeds {report['range'][0]:.4f}"
          f"..{report['range'][1]:.4f} m/s, max gap {report['max_gap_measured']:.4f}")
    for key in ("truncated_lo", "truncated_hi"):
        if report[key]:
            print(f"  note: {report[key]}")
    print(f"wrote {args.out} ({time.time() - t0:.1f} s)")
    return 0


def cmd_analyze(args) -> int:
    cfg, biped, _, _ = _setup(args)
    family = art.load_family(args.family, biped.params)
    rep = theorem2_check(family)
    print(f"{'idx':>4} {'speed':>8} {'zeta*':>9} {'delta2':>10} {'rho':>8} "
          f"{'K':>8} {'u_max':>7} {'Fn_min':>7} {'fric':>6}")
    for r in family.records:
        print(f"{r.index:>4} {r.speed:>8.4f} {r.zeta_star:>9.3f} {r.delta2:>10.7f} "
              f"{r.spectral_radius:>8.5f} {r.k_peak:>8.3f} {r.torque_max:>7.2f} "
              f"{r.normal_force_min:>7.1f} {r.friction_ratio_max:>6.3f}")
    verdict = "PASS" if rep.passed else "FAIL"
    print(f"switching bound check: zeta_lb {rep.zeta_lb:.3f} vs K/delta2 "
          f"{rep.k_max / rep.delta2:.3f} -> {verdict} (margin {rep.margin:.3f})")
    if args.out:
        doc = {"theorem2": rep.to_dict(), "records": [r.to_dict() for r in family.records]}
        art._write_json(args.out, doc)
        print(f"wrote {args.out}")
    return 0


def cmd_graph(args) -> int:
    cfg, biped, ctrl, sim = _setup(args)
    family = art.load_family(args.family, biped.params)
    eps = args.eps if args.eps is not None else cfg.get("graph", {}).get("epsilon", 2.0)
    t0 = time.time()
    graph = build_graph(family, biped, eps, ctrl, sim)
    connected, comps = strongly_connected(graph)
    feasible = sum(1 for e in graph.edges if e.feasible)
    art._write_json(args.out, graph.to_dict())
    if args.edges_csv:
        art.write_edge_csv(args.edges_csv, graph)
        print(f"wrote {args.edges_csv}")
    print(f"graph: {graph.n_nodes} nodes, {feasible}/{len(graph.edges)} feasible edges, "
          f"strongly connected: {connected} ({len(comps)} component(s))")
    print(f"wrote {args.out} ({time.time() - t0:.1f} s)")
    return 0


def _load_graph(path) -> SwitchGraph:
    doc = art._read_json(path, required_command="graph")
    return SwitchGraph.from_dict(doc)


def cmd_plan(args) -> int:
    graph = _load_graph(args.graph)
    src = args.from_node if args.from_node is not None else int(
        np.abs(graph.speeds - args.from_speed).argmin())
    dst = args.to_node if args.to_node is not None else int(
        np.abs(graph.speeds - args.to_speed).argmin())
    path, cost = plan_path(graph, src, dst)
    hops = " -> ".join(f"{p}({graph.speeds[p]:.3f})" for p in path)
    print(f"plan: {hops}")
    print(f"total dwell bound: {cost} steps over {len(path) - 1} switch(es)")
    if args.out:
        art._write_json(args.out, {"path": path, "total_bound": cost,
                                   "speeds": [float(graph.speeds[p]) for p in path]})
        print(f"wrote {args.out}")
    return 0


def cmd_run(args) -> int:
    cfg, biped, ctrl, sim = _setup(args)
    family = art.load_family(args.family, biped.params)
    graph = _load_graph(args.graph)
    with open(args.schedule) as fh:
        sched_doc = yaml.safe_load(fh)
    entries = sched_doc["entries"] if isinstance(sched_doc, dict) else sched_doc
    schedule = SpeedSchedule.from_dicts(entries)

    t0 = time.time()
    run = supervise(schedule, family, graph, biped, ctrl, sim)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    art.write_trajectory_csv(outdir / "trajectory.csv", run.steps, run.gait_indices)
    art.write_speed_csv(outdir / "speed.csv", run.speed_rows)
    with open(outdir / "switches.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "from", "to", "zeta", "edge_bound"])
        for s in run.switch_log:
            w.writerow([s["step"], s["from"], s["to"], repr(s["zeta"]), s["edge_bound"]])
    summary = {
        "entries": run.entry_results,
        "plans": run.plans,
        "switch_count": len(run.switch_log),
        "leg_dwells": run.leg_dwells,
        "steps": len(run.steps),
        "elapsed_s": time.time() - t0,
    }
    art._write_json(outdir / "summary.json", summary)
    print(f"run: {len(run.steps)} steps, {len(run.switch_log)} switches, "
          f"{len(run.entry_results)} targets reached")
    print(f"wrote {outdir}/trajectory.csv, speed.csv, switches.csv, summary.json")
    if args.render:
        _render(outdir / "speed.csv", None, outdir / "speed.png", kind="speed")
    return 0


def cmd_export(args) -> int:
    cfg, biped, _, _ = _setup(args)
    family = art.load_family(args.family, biped.params)
    if args.orbits_csv:
        art.write_orbit_csv(args.orbits_csv, family, biped)
        print(f"wrote {args.orbits_csv}")
        if args.render:
            _render(args.orbits_csv, None, Path(args.orbits_csv).with_suffix(".png"),
                    kind="continuum")
    if args.graph and args.edges_csv:
        graph = _load_graph(args.graph)
        art.write_edge_csv(args.edges_csv, graph)
        print(f"wrote {args.edges_csv}")
    return 0


def _render(csv_path, extra, out_path, kind: str):
    """Hand off to the plotting package when it is installed."""
    try:
        from gaitfigures import render
    except ImportError:
        print("note: plotting package not installed; skipping figure render")
        return
    render(kind, str(csv_path), str(out_path))
    print(f"rendered {out_path}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="gaitswitch",
        description="Limit-cycle gait families for a five-link biped: "
                    "design, certified switching, speed planning.",
    )
    ap.add_argument("--config", default=None,
                    help="YAML config path (default: $GAITSWITCH_CONFIG or packaged)")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("design-base", help="design and certify the base gait")
    p.add_argument("--target", type=float, default=None, help="target speed in m/s")
    p.add_argument("--out", default="base_gait.json")
    p.set_defaults(func=cmd_design_base)

    p = sub.add_parser("continuum", help="grow the certified gait family")
    p.add_argument("--base", default="base_gait.json")
    p.add_argument("--lo", type=float, default=None, help="lowest target speed, m/s")
    p.add_argument("--hi", type=float, default=None, help="highest target speed, m/s")
    p.add_argument("--gap", type=float, default=None, help="max consecutive speed gap, m/s")
    p.add_argument("--out", default="family.json")
    p.set_defaults(func=cmd_continuum)

    p = sub.add_parser("analyze", help="per-gait table and the switching bound check")
    p.add_argument("--family", default="family.json")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("graph", help="build the switch feasibility graph")
    p.add_argument("--family", default="family.json")
    p.add_argument("--eps", type=float, default=None,
                   help="convergence ball radius in (kg m^2/s)^2")
    p.add_argument("--out", default="graph.json")
    p.add_argument("--edges-csv", default=None)
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("plan", help="shortest dwell-time path between gaits")
    p.add_argument("--graph", default="graph.json")
    p.add_argument("--from-speed", type=float, default=None)
    p.add_argument("--to-speed", type=float, default=None)
    p.add_argument("--from-node", type=int, default=None)
    p.add_argument("--to-node", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("run", help="execute a speed schedule with the supervisor")
    p.add_argument("--family", default="family.json")
    p.add_argument("--graph", default="graph.json")
    p.add_argument("--schedule", required=True, help="YAML schedule of (step, speed)")
    p.add_argument("--outdir", default="run_out")
    p.add_argument("--render", action="store_true",
                   help="render figures when the plotting package is available")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("export", help="CSV exports for the figure pipeline")
    p.add_argument("--family", default="family.json")
    p.add_argument("--orbits-csv", default=None)
    p.add_argument("--graph", default=None)
    p.add_argument("--edges-csv", default=None)
    p.add_argument("--render", action="store_true")
    p.set_defaults(func=cmd_export)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except GaitswitchError as exc:
        return _emit_error(exc)
    except (ValueError, OSError) as exc:
        return _emit_error(exc)


if __name__ == "__main__":
    sys.exit(main())
