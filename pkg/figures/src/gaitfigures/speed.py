"""Speed-tracking figure: per-stride average speed as a step function of
time (speed is defined per stride), desired speed overlaid in red."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from ._io import floats, read_csv_columns


def plot_speed(speed_csv, out_path, schedule=None, title=None, dpi=150, return_figure=False):
    """Render the per-stride speed CSV (step, t_start, t_end, speed, ...).

    The desired-speed overlay comes from an optional schedule (list of
    (time, speed) pairs) or, failing that, from the CSV's own v_des column;
    with neither, only the measured speed is drawn.  Returns the output
    path.
    """
    data = read_csv_columns(speed_csv, ["step", "t_start", "t_end", "speed"])
    t0 = np.asarray(floats(data["t_start"]))
    t1 = np.asarray(floats(data["t_end"]))
    v = np.asarray(floats(data["speed"]))

    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    # Step function against stride end-times.
    tt = np.repeat(np.concatenate([[t0[0]], t1]), 2)[1:-1]
    vv = np.repeat(v, 2)
    ax.plot(tt, vv, color="tab:blue", lw=1.4, label="average speed")

    if schedule is not None:
        sched = np.asarray(schedule, dtype=float)
        ts = np.concatenate([sched[:, 0], [t1[-1]]])
        vs = sched[:, 1]
        tt_d = np.repeat(ts, 2)[1:-1]
        vv_d = np.repeat(vs, 2)
        ax.plot(tt_d, vv_d, color="tab:red", lw=1.2, ls="--", label="desired speed")
    elif "v_des" in data:
        vd = np.asarray(floats(data["v_des"]))
        tt_d = np.repeat(np.concatenate([[t0[0]], t1]), 2)[1:-1]
        vv_d = np.repeat(vd, 2)
        ax.plot(tt_d, vv_d, color="tab:red", lw=1.2, ls="--", label="desired speed")

    ax.set_xlabel("time (s)")
    ax.set_ylabel("speed (m/s)")
    ax.set_title(title or "Speed tracking")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    if return_figure:
        return fig
    fig.savefig(out_path, dpi=dpi)
    plt.close(fig)
    return out_path
