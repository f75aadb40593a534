"""Hybrid closed-loop simulation: event-detected swing integration, the
stride-to-stride return map on the touchdown surface, its finite-difference
Jacobian, and multi-step runs under switching signals.

The return map composes touchdown first, then the swing flow to the next
touchdown: P(x, beta) = flow(reset(x)) evaluated at the next crossing of
the touchdown surface {swing-toe height = 0, descending}.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels as K
from .control import ControllerConfig, ConstraintMonitor
from .model import Biped, GaitswitchError, State
from .outputs import GaitParams


class IntegrationError(GaitswitchError):
    pass


class NoImpactError(IntegrationError):
    """The swing toe never struck the ground within the time cap."""


class GaitValidityError(IntegrationError):
    """The phase stopped increasing along the step."""


class InvalidImpactError(IntegrationError):
    """Post-impact state pushes the fresh swing toe into the ground."""


@dataclass
class SimConfig:
    """Integrator settings; tolerances tight enough that fixed-point and
    Jacobian accuracy dominate everything downstream.  At 1e-10 the
    touchdown states carry enough integration noise that periodic-orbit
    residuals plateau near 2e-8; 1e-12 puts the floor well under the 1e-10
    fixed-point tolerance used by the solvers."""

    rtol: float = 1e-12
    atol: float = 1e-12
    hmax: float = 0.02
    max_step_time: float = 2.0  # s, no-impact cap
    max_samples: int = 40_000
    check_phase: bool = True


@dataclass
class StepResult:
    """One swing phase: dense samples plus touchdown data."""

    x_minus: State
    duration: float
    times: np.ndarray
    states: np.ndarray       # (n, 10)
    torques: np.ndarray      # (n, 4)
    f_tangential: np.ndarray
    f_normal: np.ndarray
    theta: np.ndarray
    zeta: np.ndarray
    output_norm: np.ndarray
    step_length: float
    avg_speed: float
    monitor: ConstraintMonitor

    @property
    def zeta_minus(self) -> float:
        return float(self.zeta[-1])


@dataclass
class SwitchSignal:
    """Step index -> gait index, total on the simulated horizon."""

    indices: np.ndarray

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=int)

    def __call__(self, k: int) -> int:
        return int(self.indices[k])

    def __len__(self) -> int:
        return len(self.indices)


_STATUS_ERRORS = {
    K.STATUS_NO_IMPACT: (NoImpactError, "no touchdown within the time cap (fall or flight)"),
    K.STATUS_PHASE_REVERSAL: (GaitValidityError, "phase reversed during the step"),
    K.STATUS_NOT_FINITE: (IntegrationError, "state became non-finite"),
    K.STATUS_BUFFER_FULL: (IntegrationError, "sample buffer exhausted"),
    K.STATUS_STEP_UNDERFLOW: (IntegrationError, "integrator step size underflow"),
}


def integrate_step(
    x_plus: State,
    gait: GaitParams,
    biped: Biped,
    ctrl: ControllerConfig | None = None,
    sim: SimConfig | None = None,
    diagnostics: bool = True,
) -> StepResult:
    """Flow the closed loop from a post-touchdown state to the next
    touchdown, located to |toe height| < 1e-12 m with descending velocity."""
    ctrl = ctrl or ControllerConfig()
    sim = sim or SimConfig()
    bez, aux = gait.pack()
    x0 = x_plus.as_vector()

    status, n, ts, xs, t_event, x_event = K.integrate_swing(
        x0, bez, aux, biped.mp,
        ctrl.kp, ctrl.kd, ctrl.eps, ctrl.packed_mode(),
        sim.rtol, sim.atol, sim.hmax, sim.max_step_time, sim.max_samples,
        True, sim.check_phase,
    )
    if status != K.STATUS_OK:
        exc, msg = _STATUS_ERRORS[status]
        raise exc(f"{msg} (t={t_event:.4f} s)")

    times = ts[:n].copy()
    states = xs[:n].copy()
    x_minus = State.from_vector(x_event)
    pvdot = biped.swing_foot_velocity(x_minus)[1]
    if pvdot >= 0.0:
        raise InvalidImpactError(f"touchdown with non-descending toe (dpv={pvdot:.3e})")

    p = biped.params
    monitor = ConstraintMonitor(p.torque_limit, p.friction_limit, p.min_normal_force)
    if diagnostics:
        us, fts, fns, ths, zetas, ynorms = K.trajectory_diagnostics(
            times, states, n, bez, aux, biped.mp,
            ctrl.kp, ctrl.kd, ctrl.eps, ctrl.packed_mode(),
        )
        for i in range(n):
            monitor.update(i, us[i], fts[i], fns[i])
    else:
        us = np.zeros((0, 4))
        fts = fns = ths = zetas = ynorms = np.zeros(0)

    step_length = float(biped.swing_foot_position(x_minus.q)[0])
    return StepResult(
        x_minus=x_minus,
        duration=float(t_event),
        times=times,
        states=states,
        torques=us,
        f_tangential=fts,
        f_normal=fns,
        theta=ths,
        zeta=zetas,
        output_norm=ynorms,
        step_length=step_length,
        avg_speed=step_length / float(t_event),
        monitor=monitor,
    )


def poincare_step(
    x_on_section: State,
    gait: GaitParams,
    biped: Biped,
    ctrl: ControllerConfig | None = None,
    sim: SimConfig | None = None,
    diagnostics: bool = True,
) -> StepResult:
    """Touchdown reset followed by one swing phase."""
    details = biped.impact_details(x_on_section)
    if not details["ok"]:
        raise InvalidImpactError(f"singular touchdown solve (cond={details['cond']:.2e})")
    if details["new_swing_pvdot"] < 0.0:
        raise InvalidImpactError(
            f"post-impact toe moves downward (dpv={details['new_swing_pvdot']:.3e})"
        )
    return integrate_step(details["state"], gait, biped, ctrl, sim, diagnostics)


def poincare(
    x_on_section: State,
    gait: GaitParams,
    biped: Biped,
    ctrl: ControllerConfig | None = None,
    sim: SimConfig | None = None,
) -> State:
    """Stride-to-stride return map on the touchdown surface."""
    return poincare_step(x_on_section, gait, biped, ctrl, sim, diagnostics=False).x_minus


def poincare_jacobian(
    x_star: State,
    gait: GaitParams,
    biped: Biped,
    ctrl: ControllerConfig | None = None,
    sim: SimConfig | None = None,
    fd_step: float = 1e-6,
):
    """Central finite-difference Jacobian of the return map at a point,
    with per-coordinate steps scaled by the state magnitude.

    Returns (J, eigenvalues).  The map's image lies in the 9-dimensional
    touchdown surface, so the raw 10x10 spectrum carries one near-zero
    eigenvalue; the full spectrum is reported without deflation.
    """
    x0 = x_star.as_vector()
    J = np.empty((10, 10))
    for i in range(10):
        h = fd_step * max(1.0, abs(x0[i]))
        xp = x0.copy()
        xm = x0.copy()
        xp[i] += h
        xm[i] -= h
        fp = poincare(State.from_vector(xp), gait, biped, ctrl, sim).as_vector()
        fm = poincare(State.from_vector(xm), gait, biped, ctrl, sim).as_vector()
        col = (fp - fm) / (2.0 * h)
        if not np.all(np.isfinite(col)):
            raise IntegrationError(f"non-finite return-map difference along coordinate {i}")
        J[:, i] = col
    return J, np.linalg.eigvals(J)


def section_state(gait: GaitParams, biped: Biped, zeta: float) -> State:
    """Point of the touchdown section inside the constraint surface with the
    prescribed momentum coordinate.

    On that intersection the configuration is pinned at the pre-impact
    posture and the velocity lives on a line; zeta picks the point on it.
    """
    if zeta < 0.0:
        raise ValueError("momentum coordinate must be nonnegative")
    bez, aux = gait.pack()
    q_minus, w = K.phase_config(gait.base.theta_minus, bez, aux)
    d1w = float(biped.mass_matrix(q_minus)[0] @ w)
    if d1w == 0.0:
        raise GaitswitchError("degenerate section: D_1 w = 0")
    sigma = np.sqrt(2.0 * zeta)
    thdot = sigma / d1w  # forward progress: theta increasing
    return State(q_minus, w * thdot)


@dataclass
class SwitchedStep:
    """Light per-step record for switched runs."""

    gait_index: int
    zeta_minus: float
    duration: float
    step_length: float
    avg_speed: float
    output_norm_max: float
    margins: dict
    violations: list


def run_switched(
    x0: State,
    signal: SwitchSignal | Sequence[int],
    gaits: Sequence[GaitParams],
    biped: Biped,
    ctrl: ControllerConfig | None = None,
    sim: SimConfig | None = None,
    diagnostics: bool = True,
    keep_steps: bool = False,
):
    """Iterate the return map under a switching signal from a point on the
    touchdown surface.

    Returns (records, x_final) where records is a list of SwitchedStep (and
    full StepResults attached when keep_steps).  Constraint violations are
    recorded per step, never fatal.
    """
    if not isinstance(signal, SwitchSignal):
        signal = SwitchSignal(np.asarray(signal, dtype=int))
    x = x0
    records = []
    for k in range(len(signal)):
        p = signal(k)
        step = poincare_step(x, gaits[p], biped, ctrl, sim, diagnostics=diagnostics)
        rec = SwitchedStep(
            gait_index=p,
            zeta_minus=biped.zeta(step.x_minus),
            duration=step.duration,
            step_length=step.step_length,
            avg_speed=step.avg_speed,
            output_norm_max=float(step.output_norm.max()) if diagnostics else np.nan,
            margins=step.monitor.margins() if diagnostics else {},
            violations=list(step.monitor.violations),
        )
        if keep_steps:
            rec.step = step  # type: ignore[attr-defined]
        records.append(rec)
        x = step.x_minus
    return records, x
