"""Standalone figure scripts: gaitfig {continuum|graph|speed} with file
path arguments."""

import argparse
import sys

import yaml

from ._io import FigureInputError
from .continuum import plot_continuum
from .digraph import plot_graph
from .speed import plot_speed


def build_parser():
    ap = argparse.ArgumentParser(prog="gaitfig",
                                 description="Render figures from gaitswitch CSV exports")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("continuum", help="(phase, momentum) orbit continuum")
    p.add_argument("orbits_csv")
    p.add_argument("out")
    p.add_argument("--title", default=None)

    p = sub.add_parser("graph", help="switch digraph with optional plan highlight")
    p.add_argument("edges_csv")
    p.add_argument("out")
    p.add_argument("--plan", default=None, help="JSON plan file to highlight")
    p.add_argument("--title", default=None)

    p = sub.add_parser("speed", help="speed-tracking time series")
    p.add_argument("speed_csv")
    p.add_argument("out")
    p.add_argument("--schedule", default=None,
                   help="YAML schedule to overlay; defaults to the CSV's v_des column")
    p.add_argument("--title", default=None)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "continuum":
            plot_continuum(args.orbits_csv, args.out, title=args.title)
        elif args.command == "graph":
            plot_graph(args.edges_csv, args.out, plan_path=args.plan, title=args.title)
        else:
            schedule = None
            if args.schedule:
                with open(args.schedule) as fh:
                    doc = yaml.safe_load(fh)
                entries = doc["entries"] if isinstance(doc, dict) else doc
                schedule = [(e["time"] if "time" in e else e["step"], e["speed"])
                            for e in entries]
            plot_speed(args.speed_csv, args.out, schedule=schedule, title=args.title)
    except FigureInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
