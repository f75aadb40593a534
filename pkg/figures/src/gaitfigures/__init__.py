"""Figure rendering for the walker pipeline's CSV exports.

Three figure styles, each a pure function of its input files:

- continuum: periodic orbits in the (phase, momentum) plane, colored from
  green (slowest) to red (fastest);
- graph: the switch digraph with nodes ordered by speed and an optional
  red-highlighted plan;
- speed: per-stride average speed as a step function of time with the
  desired-speed overlay.
"""

from .continuum import plot_continuum
from .digraph import plot_graph
from .speed import plot_speed

__all__ = ["plot_continuum", "plot_graph", "plot_speed", "render"]

__version__ = "0.1.0"


def render(kind: str, csv_path: str, out_path: str, **kwargs):
    """Dispatch by figure kind; used by the pipeline's --render hook."""
    if kind == "continuum":
        return plot_continuum(csv_path, out_path, **kwargs)
    if kind == "graph":
        return plot_graph(csv_path, out_path, **kwargs)
    if kind == "speed":
        return plot_speed(csv_path, out_path, **kwargs)
    raise ValueError(f"unknown figure kind {kind!r}")
