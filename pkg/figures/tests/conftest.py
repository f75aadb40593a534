import csv
import json

import numpy as np
import pytest


def write_orbit_fixture(path, n_gaits=5, n_pts=60):
    """Parabola-like momentum profiles at increasing speeds."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["gait", "speed", "theta", "zeta"])
        for g in range(n_gaits):
            speed = 0.5 + 0.08 * g
            z_star = 150.0 + 40.0 * g
            th = np.linspace(-0.3, 0.15, n_pts)
            zeta = z_star - 35.0 * np.sin(np.pi * (th + 0.3) / 0.45) ** 2
            for t, z in zip(th, zeta):
                w.writerow([g, repr(speed), repr(float(t)), repr(float(z))])
    return path


def write_edge_fixture(path, arcs, n):
    speeds = {i: 0.5 + 0.05 * i for i in range(n)}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["src", "dst", "src_speed", "dst_speed", "feasible", "dwell_bound",
                    "measured_steps", "torque_max", "normal_force_min",
                    "friction_ratio_max", "reason"])
        for s, d in arcs:
            w.writerow([s, d, speeds[s], speeds[d], 1, 3, 2, 50.0, 200.0, 0.4, ""])
    return path


def write_speed_fixture(path, staircase=True):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "t_start", "t_end", "speed", "v_des", "gait", "zeta"])
        t = 0.0
        speeds = [0.8] * 5 + [0.7, 0.62, 0.55, 0.5, 0.5, 0.5] if staircase else [0.75] * 10
        v_des = [0.8] * 5 + [0.5] * 6 if staircase else [0.75] * 10
        for k, (v, vd) in enumerate(zip(speeds, v_des)):
            dt = 0.42 / v
            w.writerow([k, repr(t), repr(t + dt), repr(v), repr(vd), 0, repr(300.0)])
            t += dt
    return path


@pytest.fixture()
def orbit_csv(tmp_path):
    return write_orbit_fixture(tmp_path / "orbits.csv")


@pytest.fixture()
def ring_edges_csv(tmp_path):
    n = 6
    arcs = [(i, (i + 1) % n) for i in range(n)]
    return write_edge_fixture(tmp_path / "edges.csv", arcs, n)


@pytest.fixture()
def disconnected_edges_csv(tmp_path):
    arcs = [(0, 1), (1, 0), (2, 3), (3, 2)]
    return write_edge_fixture(tmp_path / "edges_disc.csv", arcs, 4)


@pytest.fixture()
def speed_csv(tmp_path):
    return write_speed_fixture(tmp_path / "speed.csv")


@pytest.fixture()
def plan_json(tmp_path):
    p = tmp_path / "plan.json"
    p.write_text(json.dumps({"path": [0, 1, 2], "total_bound": 6}))
    return p
