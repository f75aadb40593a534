"""Swing-phase feedback: exact input-output linearization with a PD
auxiliary loop, plus an optional CLF-QP layer that enforces torque,
friction-cone and normal-force limits on the auxiliary input.

The nominal torque cancels the output dynamics, rendering the constraint
surface invariant; the auxiliary term only acts on the transverse error
(y, ydot) and vanishes on the surface.  In the default PD mode the
actuation/contact limits are monitored, not enforced; the switching graph
admits only transitions whose monitors stay clean.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_continuous_are

from . import _kernels as K
from .model import Biped, GaitswitchError, State
from .outputs import GaitParams, lie_derivatives
from .qpsolver import QPInfeasibleError, solve_qp


class InfeasibleControlError(GaitswitchError):
    pass


@dataclass
class ControllerConfig:
    """Feedback gains and QP weights.

    The PD loop acts on the output error at time scale eps: closing
    y'' = -(kp/eps^2) y - (kd/eps) y'.  Gains must place both poles at or
    beyond 1/eps for the transverse error to decay faster than the stride.
    """

    mode: str = "pd"            # "pd" or "clf-qp"
    kp: float = 6.0
    kd: float = 5.0
    eps: float = 0.05           # s
    clf_rate_scale: float = 1.0
    relax_penalty: float = 1e6
    cond_limit: float = 1e8

    def __post_init__(self):
        if self.kp <= 0.0 or self.kd <= 0.0 or self.eps <= 0.0:
            raise ValueError("PD gains and time scale must be positive")
        # Hurwitz check for s^2 + (kd/eps) s + kp/eps^2.
        if self.kd**2 < 0.0:
            raise ValueError("unreachable")
        if self.mode not in ("pd", "clf-qp"):
            raise ValueError(f"unknown controller mode {self.mode!r}")

    def packed_mode(self) -> int:
        return K.MODE_PD


def u_star(state: State, gait: GaitParams, biped: Biped, cond_limit: float = 1e8) -> np.ndarray:
    """Exact linearizing torque: cancels Lf^2 h through the decoupling
    matrix, so y'' = 0 along the closed loop."""
    _, _, Lf2, A = lie_derivatives(state, gait, biped, cond_limit)
    return np.linalg.solve(A, -Lf2)


def aux_nu(y: np.ndarray, ydot: np.ndarray, cfg: ControllerConfig) -> np.ndarray:
    """PD auxiliary input on the output error."""
    y = np.asarray(y, dtype=float)
    ydot = np.asarray(ydot, dtype=float)
    return -(cfg.kp / cfg.eps**2) * y - (cfg.kd / cfg.eps) * ydot


def pd_torque(state: State, gait: GaitParams, biped: Biped, cfg: ControllerConfig) -> np.ndarray:
    """Total torque in PD mode: u* + A^-1 nu."""
    y, ydot, Lf2, A = lie_derivatives(state, gait, biped, cfg.cond_limit)
    nu = aux_nu(y, ydot, cfg)
    return np.linalg.solve(A, nu - Lf2)


def _clf_data(cfg: ControllerConfig):
    """RES-CLF certificate for the linear error system eta' = F eta + G mu."""
    F = np.zeros((8, 8))
    F[:4, 4:] = np.eye(4)
    Gm = np.zeros((8, 4))
    Gm[4:, :] = np.eye(4)
    Q = np.eye(8)
    P = solve_continuous_are(F, Gm, Q, np.eye(4))
    scale = np.diag(np.concatenate([np.full(4, 1.0 / cfg.eps), np.ones(4)]))
    P_eps = scale @ P @ scale
    c3 = np.linalg.eigvalsh(Q).min() / np.linalg.eigvalsh(P).max()
    return F, Gm, P_eps, c3 * cfg.clf_rate_scale


def clf_qp_nu(state: State, gait: GaitParams, biped: Biped, cfg: ControllerConfig):
    """Auxiliary input from the constrained CLF QP.

    Minimizes ||mu||^2 + penalty * relax^2 subject to a relaxed exponential
    CLF decrease, per-joint torque bounds, the friction cone and the
    normal-force floor.  Falls back to saturated PD when infeasible.

    Returns (u_total, info) with info recording the relaxation, the active
    mode and any fallback.
    """
    p = biped.params
    y, ydot, Lf2, A = lie_derivatives(state, gait, biped, cfg.cond_limit)
    ustar = np.linalg.solve(A, -Lf2)
    Ainv = np.linalg.inv(A)

    F, Gm, P_eps, c3 = _clf_data(cfg)
    eta = np.concatenate([y, ydot])
    V = float(eta @ P_eps @ eta)
    LfV = float(eta @ (F.T @ P_eps + P_eps @ F) @ eta)
    LgV = 2.0 * (eta @ P_eps @ Gm)

    # Ground reaction is affine in the applied torque.
    f0 = biped.ground_reaction(state, ustar)
    Fu = np.empty((2, 4))
    for i in range(4):
        e = np.zeros(4)
        e[i] = 1.0
        fi = biped.ground_reaction(state, ustar + e)
        Fu[0, i] = fi.tangential - f0.tangential
        Fu[1, i] = fi.normal - f0.normal
    FmuT = Fu @ Ainv  # d(Ft,Fn)/d(mu)

    # Variables v = (mu, relax).
    Gq = np.diag([2.0, 2.0, 2.0, 2.0, 2.0 * cfg.relax_penalty])
    aq = np.zeros(5)

    rows = []
    rhs = []
    # CLF decrease: LfV + LgV mu + (c3/eps) V <= relax.
    rows.append(np.concatenate([-LgV, [1.0]]))
    rhs.append(LfV + (c3 / cfg.eps) * V)
    # Torque box: |ustar + Ainv mu| <= tau_max.
    for i in range(4):
        rows.append(np.concatenate([-Ainv[i], [0.0]]))
        rhs.append(ustar[i] - p.torque_limit)
        rows.append(np.concatenate([Ainv[i], [0.0]]))
        rhs.append(-ustar[i] - p.torque_limit)
    # Normal force floor: Fn(mu) >= floor.
    rows.append(np.concatenate([FmuT[1], [0.0]]))
    rhs.append(p.min_normal_force - f0.normal)
    # Friction cone: +-Ft <= mu_max * Fn.
    for sgn in (1.0, -1.0):
        rows.append(np.concatenate([p.friction_limit * FmuT[1] - sgn * FmuT[0], [0.0]]))
        rhs.append(sgn * f0.tangential - p.friction_limit * f0.normal)

    C = np.vstack(rows)
    bq = np.asarray(rhs)

    try:
        res = solve_qp(Gq, aq, C, bq)
        mu = res.x[:4]
        relax = res.x[4]
        u = ustar + Ainv @ mu
        return u, {"mode": "clf-qp", "relax": float(relax), "fallback": False,
                   "iterations": res.iterations}
    except QPInfeasibleError:
        u_pd = np.clip(pd_torque(state, gait, biped, cfg), -p.torque_limit, p.torque_limit)
        return u_pd, {"mode": "clf-qp", "relax": np.nan, "fallback": True, "iterations": 0}


def torque(state: State, gait: GaitParams, biped: Biped, cfg: ControllerConfig) -> np.ndarray:
    """Total applied torque in the configured mode."""
    if cfg.mode == "pd":
        return pd_torque(state, gait, biped, cfg)
    u, _ = clf_qp_nu(state, gait, biped, cfg)
    return u


@dataclass
class ConstraintMonitor:
    """Worst-case actuation/contact margins over trajectory samples."""

    torque_limit: float
    friction_limit: float
    min_normal_force: float
    max_abs_torque: float = 0.0
    min_normal: float = np.inf
    max_friction_ratio: float = 0.0
    violations: list = field(default_factory=list)

    def update(self, k: int, u: np.ndarray, ft: float, fn: float):
        peak = float(np.abs(u).max())
        ratio = abs(ft) / fn if fn > 1e-9 else np.inf
        self.max_abs_torque = max(self.max_abs_torque, peak)
        self.min_normal = min(self.min_normal, fn)
        self.max_friction_ratio = max(self.max_friction_ratio, ratio)
        if peak > self.torque_limit:
            self.violations.append((k, "torque", peak))
        if fn < self.min_normal_force:
            self.violations.append((k, "normal_force", fn))
        if ratio > self.friction_limit:
            self.violations.append((k, "friction", ratio))

    @property
    def clean(self) -> bool:
        return not self.violations

    def margins(self) -> dict:
        return {
            "torque_headroom": self.torque_limit - self.max_abs_torque,
            "min_normal_force": self.min_normal,
            "max_friction_ratio": self.max_friction_ratio,
        }
