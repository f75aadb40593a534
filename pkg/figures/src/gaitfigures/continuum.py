"""Limit-cycle continuum figure: periodic orbits in the (phase, momentum)
plane, one closed loop per gait, colored green (slow) to red (fast)."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import matplotlib as mpl
from matplotlib import cm, colors

from ._io import floats, read_csv_columns

SPEED_CMAP = "RdYlGn_r"  # low speed green, high speed red


def speed_colors(speeds):
    """Color per speed on the green-to-red scale; constant families map to
    the midpoint."""
    speeds = np.asarray(speeds, dtype=float)
    lo, hi = speeds.min(), speeds.max()
    if hi - lo < 1e-12:
        return [mpl.colormaps[SPEED_CMAP](0.5)] * len(speeds)
    norm = colors.Normalize(vmin=lo, vmax=hi)
    cmap = mpl.colormaps[SPEED_CMAP]
    return [cmap(norm(v)) for v in speeds]


def plot_continuum(orbits_csv, out_path, title=None, dpi=150, return_figure=False):
    """Render the orbit projections CSV (gait, speed, theta, zeta).

    Each gait's swing branch is closed by its touchdown reset segment, so
    every cycle appears as a loop.  Returns the matplotlib figure.
    """
    data = read_csv_columns(orbits_csv, ["gait", "speed", "theta", "zeta"])
    gait_ids = [int(g) for g in data["gait"]]
    theta = np.asarray(floats(data["theta"]))
    zeta = np.asarray(floats(data["zeta"]))
    speed_col = np.asarray(floats(data["speed"]))

    order = sorted(set(gait_ids))
    speeds = [speed_col[gait_ids.index(g)] for g in order]
    cols = speed_colors(speeds)

    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    for g, c in zip(order, cols):
        mask = np.asarray(gait_ids) == g
        th = theta[mask]
        ze = zeta[mask]
        loop_th = np.concatenate([th, th[:1]])
        loop_ze = np.concatenate([ze, ze[:1]])
        ax.plot(loop_th, loop_ze, color=c, lw=0.9)
    sm = cm.ScalarMappable(
        norm=colors.Normalize(vmin=min(speeds), vmax=max(speeds)), cmap=SPEED_CMAP
    )
    fig.colorbar(sm, ax=ax, label="average speed (m/s)")
    ax.set_xlabel(r"phase $\theta$ (rad)")
    ax.set_ylabel(r"momentum $\zeta$ ((kg m$^2$/s)$^2$)")
    ax.set_title(title or "Continuum of limit cycles")
    fig.tight_layout()
    if return_figure:
        return fig
    fig.savefig(out_path, dpi=dpi)
    plt.close(fig)
    return out_path
