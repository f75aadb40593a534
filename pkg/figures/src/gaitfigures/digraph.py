"""Transition digraph figure: one node per gait placed on a circle in
speed order, feasible switches as directed edges, and an optional plan
highlighted in red."""

import json
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from ._io import floats, read_csv_columns
from .continuum import speed_colors


def _strongly_connected_components(n, arcs):
    """Iterative Tarjan on adjacency pairs (small graphs only)."""
    adj = [[] for _ in range(n)]
    for s, d in arcs:
        adj[s].append(d)
    index = [-1] * n
    low = [0] * n
    on_stack = [False] * n
    stack, comps = [], []
    counter = [0]
    for root in range(n):
        if index[root] != -1:
            continue
        work = [(root, 0)]
        while work:
            v, pi = work[-1]
            if pi == 0:
                index[v] = low[v] = counter[0]
                counter[0] += 1
                stack.append(v)
                on_stack[v] = True
            advanced = False
            for j in range(pi, len(adj[v])):
                w = adj[v][j]
                if index[w] == -1:
                    work[-1] = (v, j + 1)
                    work.append((w, 0))
                    advanced = True
                    break
                if on_stack[w]:
                    low[v] = min(low[v], index[w])
            if advanced:
                continue
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp.append(w)
                    if w == v:
                        break
                comps.append(sorted(comp))
            work.pop()
            if work:
                low[work[-1][0]] = min(low[work[-1][0]], low[v])
    return comps


def _node_positions(nodes, components):
    """Speed-ordered circle; disconnected components get separated circles."""
    pos = {}
    if len(components) == 1:
        ordered = components[0]
        for k, node in enumerate(ordered):
            ang = math.pi / 2 - 2 * math.pi * k / len(ordered)
            pos[node] = (math.cos(ang), math.sin(ang))
        return pos
    for ci, comp in enumerate(components):
        cx = 2.6 * ci
        for k, node in enumerate(comp):
            ang = math.pi / 2 - 2 * math.pi * k / max(len(comp), 1)
            pos[node] = (cx + math.cos(ang), math.sin(ang))
    return pos


def plot_graph(edges_csv, out_path, plan_path=None, title=None, dpi=150, return_figure=False):
    """Render the edge-list CSV (src, dst, src_speed, dst_speed, feasible,
    ...); plan_path may name a JSON plan file whose node sequence is drawn
    with red arrows.  Disconnected graphs print a warning and draw each
    component apart.  Returns the output path.
    """
    data = read_csv_columns(edges_csv, ["src", "dst", "src_speed", "dst_speed", "feasible"])
    src = [int(v) for v in data["src"]]
    dst = [int(v) for v in data["dst"]]
    feas = [bool(int(v)) for v in data["feasible"]]
    node_speed = {}
    for s, d, vs, vd in zip(src, dst, floats(data["src_speed"]), floats(data["dst_speed"])):
        node_speed[s] = vs
        node_speed[d] = vd
    nodes = sorted(node_speed)
    n = max(nodes) + 1
    arcs = [(s, d) for s, d, f in zip(src, dst, feas) if f and s != d]

    comps = _strongly_connected_components(n, arcs)
    comps = [c for c in comps if any(m in node_speed for m in c)]
    comps.sort(key=lambda c: min(node_speed.get(m, 0.0) for m in c))
    comps = [sorted(c, key=lambda m: node_speed.get(m, 0.0)) for c in comps]
    if len(comps) > 1:
        print(f"warning: transition graph is not strongly connected "
              f"({len(comps)} components)")
    pos = _node_positions(nodes, comps)

    plan = []
    if plan_path is not None:
        doc = json.loads(Path(plan_path).read_text())
        plan = list(doc["path"]) if isinstance(doc, dict) else list(doc)

    plan_arcs = set(zip(plan[:-1], plan[1:]))
    fig, ax = plt.subplots(figsize=(6.4, 6.0))
    for s, d in arcs:
        xs, ys = pos[s]
        xd, yd = pos[d]
        highlighted = (s, d) in plan_arcs
        ax.annotate(
            "",
            xy=(xd, yd),
            xytext=(xs, ys),
            arrowprops=dict(
                arrowstyle="-|>",
                color="crimson" if highlighted else "0.75",
                lw=2.0 if highlighted else 0.6,
                shrinkA=10,
                shrinkB=10,
            ),
            zorder=3 if highlighted else 1,
        )
    speeds = [node_speed[v] for v in nodes]
    cols = speed_colors(speeds)
    xs = [pos[v][0] for v in nodes]
    ys = [pos[v][1] for v in nodes]
    ax.scatter(xs, ys, s=240, c=cols, edgecolors="black", zorder=4)
    for v in nodes:
        ax.annotate(f"{node_speed[v]:.2f}", pos[v], ha="center", va="center",
                    fontsize=6, zorder=5)
    ax.set_aspect("equal")
    ax.axis("off")
    ax.set_title(title or "Feasible gait switches (speeds in m/s)")
    fig.tight_layout()
    if return_figure:
        return fig
    fig.savefig(out_path, dpi=dpi)
    plt.close(fig)
    return out_path
