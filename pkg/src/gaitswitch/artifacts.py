"""Configuration and artifact files.

Everything the pipeline persists is either YAML (the configuration, with
units stated per key) or JSON (gait, family, graph) or CSV (trajectories,
orbits, edge lists).  The trajectory CSV column order is part of the
contract:

    t, q1..q5, dq1..dq5, u1..u4, F_t, F_n, theta, zeta, y_norm, step, gait

with time in seconds, angles in radians, torques in newton meters, forces
in newtons.
"""

from __future__ import annotations

import csv
import importlib.resources as resources
import json
import os
from pathlib import Path

import numpy as np
import yaml

from .control import ControllerConfig
from .design import DesignConfig, GaitFamily, LimitCycleRecord, model_hash
from .model import Biped, GaitswitchError, ModelParams
from .outputs import BezierOutputs, BumpPolynomial, GaitParams
from .sim import SimConfig

TRAJECTORY_COLUMNS = (
    ["t"]
    + [f"q{i}" for i in range(1, 6)]
    + [f"dq{i}" for i in range(1, 6)]
    + [f"u{i}" for i in range(1, 5)]
    + ["F_t", "F_n", "theta", "zeta", "y_norm", "step", "gait"]
)

CONFIG_ENV_VAR = "GAITSWITCH_CONFIG"


class MissingArtifactError(GaitswitchError):
    """A required prior-stage artifact is absent."""

    def __init__(self, path, required_command: str):
        self.path = str(path)
        self.required_command = required_command
        super().__init__(
            f"missing artifact {path!s}: run `gaitswitch {required_command}` first"
        )


# ----------------------------------------------------------------------
# Configuration
# ----------------------------------------------------------------------


def default_config_path() -> Path:
    return Path(str(resources.files("gaitswitch").joinpath("data/default_config.yaml")))


def load_config(path: str | os.PathLike | None = None) -> dict:
    """Read the YAML configuration; falls back to $GAITSWITCH_CONFIG, then
    the packaged defaults."""
    if path is None:
        path = os.environ.get(CONFIG_ENV_VAR) or default_config_path()
    path = Path(path)
    if not path.exists():
        raise GaitswitchError(f"config file not found: {path}")
    with open(path) as fh:
        cfg = yaml.safe_load(fh) or {}
    cfg.setdefault("model", {})
    cfg.setdefault("controller", {})
    cfg.setdefault("sim", {})
    cfg.setdefault("design", {})
    cfg.setdefault("continuum", {})
    cfg.setdefault("graph", {})
    return cfg


def model_from_config(cfg: dict) -> ModelParams:
    return ModelParams(**cfg.get("model", {}))


def controller_from_config(cfg: dict) -> ControllerConfig:
    return ControllerConfig(**cfg.get("controller", {}))


def sim_from_config(cfg: dict) -> SimConfig:
    return SimConfig(**cfg.get("sim", {}))


def design_from_config(cfg: dict) -> DesignConfig:
    return DesignConfig(**cfg.get("design", {}))


# ----------------------------------------------------------------------
# Gait and family files
# ----------------------------------------------------------------------


def gait_to_dict(gait: GaitParams) -> dict:
    return {
        "bezier": gait.base.coeffs.tolist(),
        "theta_plus": gait.base.theta_plus,
        "theta_minus": gait.base.theta_minus,
        "bump": {
            "coeffs": gait.bump.coeffs.tolist(),
            "theta_plus": gait.bump.theta_plus,
            "theta_stop": gait.bump.theta_stop,
        },
        "beta": gait.beta.tolist(),
    }


def gait_from_dict(d: dict) -> GaitParams:
    base = BezierOutputs(np.asarray(d["bezier"], dtype=float),
                         float(d["theta_plus"]), float(d["theta_minus"]))
    bump = BumpPolynomial(np.asarray(d["bump"]["coeffs"], dtype=float),
                          float(d["bump"]["theta_plus"]), float(d["bump"]["theta_stop"]))
    return GaitParams(base, bump, np.asarray(d["beta"], dtype=float))


def save_gait(path, gait: GaitParams, record: LimitCycleRecord | None = None,
              provenance: dict | None = None):
    doc = gait_to_dict(gait)
    if record is not None:
        doc["record"] = record.to_dict()
    if provenance:
        doc["provenance"] = provenance
    _write_json(path, doc)


def load_gait(path) -> tuple[GaitParams, LimitCycleRecord | None]:
    doc = _read_json(path, required_command="design-base")
    gait = gait_from_dict(doc)
    rec = LimitCycleRecord.from_dict(doc["record"]) if "record" in doc else None
    return gait, rec


def save_family(path, family: GaitFamily):
    doc = {
        "base": gait_to_dict(family.base),
        "records": [r.to_dict() for r in family.records],
        "model_hash": family.model_hash,
        "provenance": family.provenance,
    }
    _write_json(path, doc)


def load_family(path, expected_model: ModelParams | None = None) -> GaitFamily:
    doc = _read_json(path, required_command="continuum")
    family = GaitFamily(
        base=gait_from_dict(doc["base"]),
        records=[LimitCycleRecord.from_dict(r) for r in doc["records"]],
        model_hash=doc.get("model_hash", ""),
        provenance=doc.get("provenance", {}),
    )
    if expected_model is not None and family.model_hash:
        if family.model_hash != model_hash(expected_model):
            raise GaitswitchError(
                "family file was generated with different model parameters "
                f"(hash {family.model_hash})"
            )
    return family


# ----------------------------------------------------------------------
# CSV writers
# ----------------------------------------------------------------------


def write_trajectory_csv(path, steps, gait_indices=None, time_offset: float = 0.0):
    """Dense trajectory CSV for a list of StepResult, one row per sample.

    Repeats of the touchdown sample at step boundaries are kept: each step
    contributes its full sample set with a running time offset.
    """
    gait_indices = gait_indices if gait_indices is not None else [0] * len(steps)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRAJECTORY_COLUMNS)
        t0 = time_offset
        for k, step in enumerate(steps):
            n = len(step.times)
            for i in range(n):
                x = step.states[i]
                w.writerow(
                    [_num(t0 + step.times[i])]
                    + [_num(v) for v in x[:5]]
                    + [_num(v) for v in x[5:]]
                    + [_num(v) for v in step.torques[i]]
                    + [
                        _num(step.f_tangential[i]),
                        _num(step.f_normal[i]),
                        _num(step.theta[i]),
                        _num(step.zeta[i]),
                        _num(step.output_norm[i]),
                        k,
                        gait_indices[k],
                    ]
                )
            t0 += step.duration


def write_orbit_csv(path, family: GaitFamily, biped: Biped, n_grid: int = 240):
    """Phase-plane projections (theta, zeta) of every periodic orbit, for
    the continuum figure: columns gait, speed, theta, zeta."""
    from . import _kernels as K
    from .design import _cumulative_simpson

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["gait", "speed", "theta", "zeta"])
        for rec in family.records:
            gait = family.base.with_beta(rec.beta)
            bez, aux = gait.pack()
            qs, wbars, d1w, g1, pv = K.zero_dynamics_grid(bez, aux, biped.mp, n_grid)
            dth = (rec.theta_minus - rec.theta_plus) / (n_grid - 1)
            V = _cumulative_simpson(g1 * d1w, dth)
            zet = rec.delta2 * rec.zeta_star - V
            for i in range(n_grid):
                th = rec.theta_plus + i * dth
                w.writerow([rec.index, _num(rec.speed), _num(th), _num(zet[i])])


def write_speed_csv(path, rows):
    """Per-step speed trace: step, t_start, t_end, speed, v_des, gait, zeta."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "t_start", "t_end", "speed", "v_des", "gait", "zeta"])
        for r in rows:
            w.writerow([r["step"], _num(r["t_start"]), _num(r["t_end"]), _num(r["speed"]),
                        _num(r["v_des"]), r["gait"], _num(r["zeta"])])


def write_edge_csv(path, graph):
    """Edge list: src, dst, feasible, weight, measured_steps, margins."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["src", "dst", "src_speed", "dst_speed", "feasible", "dwell_bound",
             "measured_steps", "torque_max", "normal_force_min", "friction_ratio_max",
             "reason"]
        )
        for e in graph.edges:
            w.writerow(
                [e.src, e.dst, _num(graph.speeds[e.src]), _num(graph.speeds[e.dst]),
                 int(e.feasible), e.dwell_bound, e.measured_steps,
                 _num(e.torque_max), _num(e.normal_force_min),
                 _num(e.friction_ratio_max), e.reason]
            )


# ----------------------------------------------------------------------
# Internals
# ----------------------------------------------------------------------



def _num(v) -> str:
    """Full-precision decimal literal for CSV cells."""
    return repr(float(v))

def _write_json(path, doc):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def _read_json(path, required_command: str):
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(path, required_command)
    with open(path) as fh:
        return json.load(fh)
