"""Gait design and the speed-indexed family.

The base gait is found by derivative-free search over the free Bezier
coefficients and the touchdown velocity parameters, with the boundary
coefficients pinned so the constraint surface is invariant through
touchdown for every modulation amplitude.  The search objective never
integrates the full-order dynamics: on the constraint surface the stride
reduces to one momentum coordinate whose return map is affine,
    zeta_next = delta2 * zeta - V(theta_minus),
so periodic speed, actuation and contact loads all follow from phase
quadrature.  Full-order simulation then certifies the result.

Faster and slower gaits come from modulating the outputs: the amplitude
for a desired speed uses the pseudoinverse of the measured one-step speed
sensitivity, and the family is grown outward with warm starts until
certification fails or the requested range is covered.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.optimize import minimize

from . import _kernels as K
from .control import ControllerConfig
from .model import Biped, GaitswitchError, ModelParams, State
from .outputs import BezierOutputs, GaitParams, build_bump
from .sim import (
    IntegrationError,
    SimConfig,
    poincare,
    poincare_jacobian,
    poincare_step,
    section_state,
)

BEZIER_DEGREE = 6


class GaitDesignError(GaitswitchError):
    pass


class ContinuationError(GaitswitchError):
    pass


class ReducedMapError(GaitswitchError):
    """Simulated stride-to-stride data is not affine in the momentum
    coordinate: the state left the constraint surface."""


# ----------------------------------------------------------------------
# Touchdown geometry
# ----------------------------------------------------------------------


def touchdown_posture(biped: Biped, step_length: float, knee_flexion: float,
                      torso_lean: float) -> np.ndarray:
    """Pre-impact configuration: swing toe grounded one step length ahead,
    both knees flexed by the given angle, torso at the given absolute lean."""
    from scipy.optimize import fsolve

    kappa = knee_flexion

    def residual(zv):
        q1, q4 = zv
        q = np.array([q1, -kappa, torso_lean - q1 + kappa, q4, kappa])
        px, pv = biped.swing_foot_position(q)
        return [px - step_length, pv]

    reach = biped.params.thigh_length + biped.params.shank_length
    if not 0.0 < step_length < 2.0 * reach:
        raise GaitDesignError(f"step length {step_length} outside the kinematic range")
    gamma0 = np.arcsin(0.5 * step_length / reach)
    zv, info, ier, msg = fsolve(
        residual, [gamma0 + 0.5 * kappa, -2.0 * gamma0], full_output=True, xtol=1e-13
    )
    if ier != 1:
        raise GaitDesignError(f"touchdown posture solve failed: {msg}")
    q1, q4 = zv
    return np.array([q1, -kappa, torso_lean - q1 + kappa, q4, kappa])


def touchdown_velocity(biped: Biped, q_minus: np.ndarray, toe_vx: float, toe_vz: float,
                       torso_rate: float, stance_rate: float) -> np.ndarray:
    """Pre-impact velocity with prescribed swing-toe touchdown velocity,
    torso and rear-thigh angular rates; phase rate normalized to one.

    Matching the toe speed to the ground keeps the contact impulse small,
    which is what makes the post-impact motion usable as a step start.
    """
    Jsw = K.swing_foot_jac(q_minus, biped.mp)
    A = np.vstack([Jsw, K.C_THETA, [1.0, 1.0, 0.0, 0.0, 0.0], [1.0, 1.0, 1.0, 0.0, 0.0]])
    return np.linalg.solve(A, np.array([toe_vx, toe_vz, 1.0, stance_rate, torso_rate]))


def pinned_bezier(interior: np.ndarray, q_minus: np.ndarray, dq_minus: np.ndarray,
                  biped: Biped) -> tuple[np.ndarray, dict]:
    """Bezier matrix with boundary coefficients pinned by touchdown
    invariance: positions and slopes at both phase endpoints are consistent
    with the impact map, so the constraint surface survives the reset for
    every modulation amplitude (the bump vanishes to first order there)."""
    th_minus = float(K.theta_of(q_minus))
    q_plus, dq_plus, ok, cond, _, _, pvdot_plus = K.impact_transition(q_minus, dq_minus, biped.mp)
    th_plus = float(K.theta_of(q_plus))
    dth = th_minus - th_plus
    thdot_minus = float(K.C_THETA @ dq_minus)
    thdot_plus = float(K.C_THETA @ dq_plus)
    info = {
        "q_plus": q_plus,
        "dq_plus": dq_plus,
        "theta_plus": th_plus,
        "theta_minus": th_minus,
        "thdot_plus": thdot_plus,
        "thdot_minus": thdot_minus,
        "pvdot_plus": float(pvdot_plus),
        "impact_ok": bool(ok),
        "impact_cond": float(cond),
    }
    bez = np.zeros((4, BEZIER_DEGREE + 1))
    if not ok or abs(thdot_plus) < 1e-9 or abs(thdot_minus) < 1e-9 or dth <= 0.0:
        info["pinned"] = False
        return bez, info
    bez[:, 0] = q_plus[1:]
    bez[:, BEZIER_DEGREE] = q_minus[1:]
    bez[:, 1] = bez[:, 0] + dth * dq_plus[1:] / (BEZIER_DEGREE * thdot_plus)
    bez[:, BEZIER_DEGREE - 1] = bez[:, BEZIER_DEGREE] - dth * dq_minus[1:] / (
        BEZIER_DEGREE * thdot_minus
    )
    bez[:, 2 : BEZIER_DEGREE - 1] = interior
    info["pinned"] = True
    return bez, info


# ----------------------------------------------------------------------
# Reduced (constraint-surface) stride evaluation
# ----------------------------------------------------------------------


def _cumulative_simpson(y: np.ndarray, dx: float) -> np.ndarray:
    """Cumulative integral on a uniform grid; Simpson pairs with local
    quadratic correction on the odd points."""
    n = len(y)
    out = np.zeros(n)
    for i in range(2, n, 2):
        out[i] = out[i - 2] + dx * (y[i - 2] + 4.0 * y[i - 1] + y[i]) / 3.0
    for i in range(1, n, 2):
        if i + 1 < n:
            out[i] = out[i - 1] + dx * (5.0 * y[i - 1] + 8.0 * y[i] - y[i + 1]) / 12.0
        else:
            out[i] = out[i - 1] + dx * (y[i - 1] + y[i]) / 2.0
    return out


def reduced_stride(gait: GaitParams, biped: Biped, n: int = 401) -> dict:
    """Quadrature evaluation of one stride restricted to the constraint
    surface: contraction factor, momentum-drop profile V(theta) and its
    peak, periodic momentum, stride time, speed, actuation and contact
    extremes, toe clearance."""
    bez, aux = gait.pack()
    thp, thm = float(aux[0]), float(aux[1])
    qs, wbars, d1w, g1, pv = K.zero_dynamics_grid(bez, aux, biped.mp, n)
    dx = (thm - thp) / (n - 1)
    V = _cumulative_simpson(g1 * d1w, dx)

    out: dict = {
        "theta_plus": thp,
        "theta_minus": thm,
        "V": V,
        "V_end": float(V[-1]),
        "K": float(V.max()),
        "grid_pv": pv,
        "grid_q": qs,
        "valid": False,
    }

    q_m, w_m = qs[-1], wbars[-1]
    q_p, dq_p, ok, _, _, _, pvdot_plus = K.impact_transition(q_m, w_m, biped.mp)
    sigma_minus = d1w[-1]
    if not ok or sigma_minus <= 0.0:
        out["reason"] = "degenerate touchdown"
        return out
    sigma_plus = float(biped.mass_matrix(q_p)[0] @ dq_p)
    delta2 = (sigma_plus / sigma_minus) ** 2
    out["delta2"] = float(delta2)
    out["pvdot_plus"] = float(pvdot_plus)
    if delta2 >= 1.0 or V[-1] >= 0.0:
        out["reason"] = "no stable periodic momentum"
        return out

    zeta_star = -V[-1] / (1.0 - delta2)
    zetas = delta2 * zeta_star - V
    out["zeta_star"] = float(zeta_star)
    out["domain_margin"] = float(zetas.min())
    if zetas.min() <= 0.0 or np.any(d1w <= 0.0):
        out["reason"] = "phase stalls along the stride"
        return out

    sigma = np.sqrt(2.0 * zetas)
    period = float(_cumulative_simpson(d1w / sigma, dx)[-1])
    step_length = float(biped.swing_foot_position(q_m)[0])
    umax, fn_min, fr_max, knee_st, knee_sw, thdot_min = K.orbit_constraints(
        qs, wbars, d1w, zetas, bez, aux, biped.mp
    )
    i0, i1 = int(0.12 * n), int(0.85 * n)
    out.update(
        zetas=zetas,
        period=period,
        step_length=step_length,
        speed=step_length / period,
        umax=float(umax),
        fn_min=float(fn_min),
        fr_max=float(fr_max),
        knee_st=float(knee_st),
        knee_sw=float(knee_sw),
        thdot_min=float(thdot_min),
        clearance=float(pv[i0:i1].min()),
        pv_all_positive=bool(np.all(pv[1:-1] > 0.0)),
        dpv_dth_end=float((pv[-1] - pv[-2]) / dx),
        valid=True,
    )
    return out


# ----------------------------------------------------------------------
# Records
# ----------------------------------------------------------------------


@dataclass
class LimitCycleRecord:
    """Certified periodic gait: fixed point, reduced-map data, speed and
    worst-case actuation/contact margins on the orbit."""

    index: int
    beta: np.ndarray
    x_star: np.ndarray           # (10,) touchdown-section fixed point
    zeta_star: float
    delta2: float
    v_end: float                 # V(theta_minus)
    k_peak: float                # max_theta V(theta)
    speed: float
    period: float
    step_length: float
    theta_plus: float
    theta_minus: float
    spectral_radius: float
    fixed_point_residual: float
    affinity_residual: float
    torque_max: float
    normal_force_min: float
    friction_ratio_max: float

    @property
    def domain_valid(self) -> bool:
        return self.zeta_star > self.k_peak / self.delta2

    def closure_error(self) -> float:
        """Relative mismatch of zeta_star against -V/(1 - delta2)."""
        implied = -self.v_end / (1.0 - self.delta2)
        return abs(self.zeta_star - implied) / abs(implied)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["beta"] = self.beta.tolist()
        d["x_star"] = self.x_star.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LimitCycleRecord":
        d = dict(d)
        d["beta"] = np.asarray(d["beta"], dtype=float)
        d["x_star"] = np.asarray(d["x_star"], dtype=float)
        return cls(**d)


@dataclass
class GaitFamily:
    """Speed-indexed certified gaits sharing one base trajectory set."""

    base: GaitParams
    records: list
    model_hash: str = ""
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.records = sorted(self.records, key=lambda r: r.speed)
        for i, rec in enumerate(self.records):
            rec.index = i

    def __len__(self) -> int:
        return len(self.records)

    def gait(self, index: int) -> GaitParams:
        return self.base.with_beta(self.records[index].beta)

    def gaits(self) -> list:
        return [self.gait(i) for i in range(len(self))]

    @property
    def speeds(self) -> np.ndarray:
        return np.array([r.speed for r in self.records])

    @property
    def delta2(self) -> float:
        return float(np.median([r.delta2 for r in self.records]))

    @property
    def zeta_lb(self) -> float:
        return min(r.zeta_star for r in self.records)

    @property
    def zeta_ub(self) -> float:
        return max(r.zeta_star for r in self.records)

    @property
    def k_max(self) -> float:
        return max(r.k_peak for r in self.records)

    def nearest_index(self, speed: float) -> int:
        """Family member closest in speed; ties resolve to the slower gait."""
        gaps = np.abs(self.speeds - speed)
        best = np.nonzero(gaps == gaps.min())[0]
        return int(best[0])


def model_hash(params: ModelParams) -> str:
    payload = json.dumps(params.as_dict(), sort_keys=True).encode()
    return hashlib.sha256(payload).hexdigest()[:16]


# ----------------------------------------------------------------------
# Reduced-map fitting and profiles from full-order simulation
# ----------------------------------------------------------------------


def fit_reduced_map(
    gait: GaitParams,
    biped: Biped,
    zeta_samples: tuple[float, float],
    ctrl: ControllerConfig | None = None,
    sim: SimConfig | None = None,
    validate: bool = True,
    tol: float = 1e-8,
):
    """Fit (delta2, V_end) of the affine stride map from two simulated
    strides started on the constraint surface; a third stride validates
    affinity.

    Returns (delta2, v_end, zeta_star, affinity_residual).
    """
    z1, z2 = zeta_samples
    if z1 == z2:
        raise ValueError("need two distinct momentum samples")
    outs = []
    for zz in (z1, z2):
        step = poincare_step(section_state(gait, biped, zz), gait, biped, ctrl, sim,
                             diagnostics=False)
        outs.append(biped.zeta(step.x_minus))
    delta2 = (outs[1] - outs[0]) / (z2 - z1)
    v_end = delta2 * z1 - outs[0]
    if not 0.0 < delta2 < 1.0:
        raise ReducedMapError(f"contraction factor {delta2:.6f} outside (0, 1)")
    zeta_star = -v_end / (1.0 - delta2)

    residual = 0.0
    if validate:
        z3 = 0.5 * (z1 + z2) * 1.07
        step = poincare_step(section_state(gait, biped, z3), gait, biped, ctrl, sim,
                             diagnostics=False)
        predicted = delta2 * z3 - v_end
        residual = abs(biped.zeta(step.x_minus) - predicted) / abs(predicted)
        if residual > tol:
            raise ReducedMapError(
                f"stride map is not affine (validation residual {residual:.2e}): "
                "the state is leaking off the constraint surface"
            )
    return float(delta2), float(v_end), float(zeta_star), float(residual)


def momentum_drop_profile(
    gait: GaitParams,
    biped: Biped,
    zeta_start: float,
    ctrl: ControllerConfig | None = None,
    sim: SimConfig | None = None,
    n_grid: int = 1200,
):
    """V(theta) = zeta(step start) - zeta(theta) along one simulated stride
    on the constraint surface, resampled on a uniform phase grid.

    Returns (theta_grid, V_grid, K_peak, V_end).
    """
    from scipy.interpolate import CubicSpline

    step = poincare_step(section_state(gait, biped, zeta_start), gait, biped, ctrl, sim)
    th = step.theta
    if np.any(np.diff(th) < -1e-12):
        raise IntegrationError("phase not monotone along the stride")
    v_traj = step.zeta[0] - step.zeta
    keep = np.concatenate([[True], np.diff(th) > 1e-14])
    grid = np.linspace(th[0], th[-1], n_grid)
    v_grid = CubicSpline(th[keep], v_traj[keep])(grid)
    # Endpoint exact: no interpolation at the located touchdown.
    v_grid[-1] = v_traj[-1]
    return grid, v_grid, float(v_grid.max()), float(v_traj[-1])


def fixed_point_solve(
    gait: GaitParams,
    biped: Biped,
    x_guess: State,
    ctrl: ControllerConfig | None = None,
    sim: SimConfig | None = None,
    tol: float = 1e-10,
    max_iter: int = 50,
):
    """Newton solve of P(x) = x on the touchdown section.

    The return map's image lies in the section, so the iteration is run in
    the full state space; the difference map's Jacobian is invertible
    exactly when the return map has no unit eigenvalue.

    Returns (x_star, iterations, residual_inf).
    """
    x = x_guess.as_vector().copy()

    def h_of(xv):
        return poincare(State.from_vector(xv), gait, biped, ctrl, sim).as_vector() - xv

    hx = h_of(x)
    res = np.abs(hx).max()
    for it in range(max_iter):
        if res < tol:
            return State.from_vector(x), it, float(res)
        J, _ = poincare_jacobian(State.from_vector(x), gait, biped, ctrl, sim)
        A = J - np.eye(10)
        cond = np.linalg.cond(A)
        if not np.isfinite(cond) or cond > 1e12:
            raise ContinuationError(
                f"return map has a near-unit eigenvalue (difference map cond {cond:.2e})"
            )
        dx = np.linalg.solve(A, -hx)
        # Backtracking on the residual.
        step_scale = 1.0
        for _ in range(8):
            x_new = x + step_scale * dx
            try:
                h_new = h_of(x_new)
            except IntegrationError:
                step_scale *= 0.5
                continue
            if np.abs(h_new).max() < res:
                break
            step_scale *= 0.5
        else:
            raise ContinuationError(f"Newton stalled at residual {res:.2e}")
        x, hx = x_new, h_new
        res = np.abs(hx).max()
    if res < tol:
        return State.from_vector(x), max_iter, float(res)
    raise ContinuationError(
        f"no convergence in {max_iter} iterations (residual {res:.2e}); "
        "continuation step too large"
    )


# ----------------------------------------------------------------------
# Certification
# ----------------------------------------------------------------------


def certify_gait(
    gait: GaitParams,
    biped: Biped,
    zeta_guess: float,
    index: int = 0,
    ctrl: ControllerConfig | None = None,
    sim: SimConfig | None = None,
    fp_tol: float = 1e-8,
    with_jacobian: bool = True,
) -> LimitCycleRecord:
    """Full-order certification of one gait: affine fit, periodicity,
    stability spectrum and constraint extremes on the orbit."""
    delta2, v_end, zeta_star, affinity = fit_reduced_map(
        gait, biped, (0.95 * zeta_guess, 1.05 * zeta_guess), ctrl, sim
    )
    x_star = section_state(gait, biped, zeta_star)
    step = poincare_step(x_star, gait, biped, ctrl, sim)
    residual = float(np.abs(step.x_minus.as_vector() - x_star.as_vector()).max())
    if residual > fp_tol:
        raise GaitDesignError(f"periodic orbit residual {residual:.2e} exceeds {fp_tol:.1e}")

    _, _, k_peak, v_end_profile = momentum_drop_profile(gait, biped, zeta_star, ctrl, sim)

    if with_jacobian:
        _, eigs = poincare_jacobian(x_star, gait, biped, ctrl, sim)
        spectral_radius = float(np.abs(eigs).max())
    else:
        spectral_radius = float("nan")

    monitor = step.monitor
    rec = LimitCycleRecord(
        index=index,
        beta=gait.beta.copy(),
        x_star=x_star.as_vector(),
        zeta_star=zeta_star,
        delta2=delta2,
        v_end=v_end,
        k_peak=k_peak,
        speed=step.avg_speed,
        period=step.duration,
        step_length=step.step_length,
        theta_plus=gait.base.theta_plus,
        theta_minus=gait.base.theta_minus,
        spectral_radius=spectral_radius,
        fixed_point_residual=residual,
        affinity_residual=affinity,
        torque_max=float(np.abs(step.torques).max()),
        normal_force_min=float(step.f_normal.min()),
        friction_ratio_max=float((np.abs(step.f_tangential) / step.f_normal).max()),
    )
    p = biped.params
    problems = []
    if rec.delta2 >= 1.0:
        problems.append(f"contraction {rec.delta2:.4f} >= 1")
    if with_jacobian and not rec.spectral_radius < 1.0:
        problems.append(f"spectral radius {rec.spectral_radius:.4f} >= 1")
    if rec.torque_max > p.torque_limit:
        problems.append(f"torque {rec.torque_max:.1f} over limit")
    if rec.normal_force_min < p.min_normal_force:
        problems.append(f"normal force {rec.normal_force_min:.1f} under floor")
    if rec.friction_ratio_max > p.friction_limit:
        problems.append(f"friction ratio {rec.friction_ratio_max:.2f} over limit")
    if not rec.domain_valid:
        problems.append("fixed point outside the reduced map's domain")
    if problems:
        raise GaitDesignError("; ".join(problems))
    return rec


# ----------------------------------------------------------------------
# Base gait design
# ----------------------------------------------------------------------


@dataclass
class DesignConfig:
    """Search setup for the base gait."""

    target_speed: float = 0.75     # m/s
    step_length: float = 0.42      # m
    knee_flexion: float = 0.3      # rad at touchdown, both knees
    torso_lean: float = 0.08       # rad, absolute
    toe_vx: float = 0.0            # m/s, swing-toe horizontal speed at touchdown (seed)
    toe_vz: float = -0.15          # m/s, swing-toe vertical speed at touchdown (seed)
    torso_rate: float = 0.4        # rad/s per unit phase rate (seed)
    stance_rate: float = 0.8       # rad/s per unit phase rate (seed)
    swing_clearance_seed: float = 0.3   # rad added to swing-knee interior coefficients
    torque_fraction: float = 0.7   # design headroom below the hard torque limit
    friction_fraction: float = 0.7
    normal_force_factor: float = 1.3
    min_clearance: float = 0.015   # m
    domain_fraction: float = 0.32  # required min zeta along orbit, relative to zeta*
    grid_points: int = 201
    max_iter: int = 8000
    speed_weight: float = 40.0
    speed_tol: float = 0.02        # m/s, acceptance on the designed speed


def _design_objective(zv, q_minus, biped, cfg, full=False):
    def hinge(x):
        return x if x > 0.0 else 0.0

    p = biped.params
    interior = zv[:12].reshape(4, 3)
    toe_vx, toe_vz, torso_rate, stance_rate = zv[12:16]
    try:
        dq_minus = touchdown_velocity(biped, q_minus, toe_vx, toe_vz, torso_rate, stance_rate)
        bez, info = pinned_bezier(interior, q_minus, dq_minus, biped)
    except np.linalg.LinAlgError:
        return 1e8
    pen = 0.0
    if not info["impact_ok"]:
        return 1e7
    pen += 1e4 * hinge(0.15 - info["thdot_plus"]) ** 2
    pen += 1e4 * hinge(0.05 - info["pvdot_plus"]) ** 2
    pen += 1e4 * hinge(0.1 - info["thdot_minus"]) ** 2
    sigma_minus = float(biped.mass_matrix(q_minus)[0] @ dq_minus)
    pen += 1e4 * hinge(1.0 - sigma_minus) ** 2
    if not info["pinned"] or info["thdot_plus"] <= 0.01:
        return 1e6 + pen

    base = BezierOutputs(bez, info["theta_plus"], info["theta_minus"])
    gait = GaitParams(base, build_bump(info["theta_plus"], info["theta_minus"]))
    r = reduced_stride(gait, biped, cfg.grid_points)
    if "delta2" in r:
        pen += 1e4 * hinge(r["delta2"] - 0.95) ** 2
    if not r["valid"]:
        pen += 1e2 * hinge(1.0 + r["V_end"]) ** 2
        if "domain_margin" in r:
            pen += 1e2 * hinge(5.0 - r["domain_margin"]) ** 2
        return 1e5 + pen

    pen += cfg.speed_weight * abs(r["speed"] - cfg.target_speed)
    pen += 3e-3 * hinge(r["umax"] - cfg.torque_fraction * p.torque_limit) ** 2
    pen += 3e-3 * hinge(cfg.normal_force_factor * p.min_normal_force - r["fn_min"]) ** 2
    pen += 3e2 * hinge(r["fr_max"] - cfg.friction_fraction * p.friction_limit) ** 2
    pen += 3e4 * hinge(cfg.min_clearance - r["clearance"]) ** 2
    pen += 1e4 * hinge(cfg.domain_fraction - r["domain_margin"] / r["zeta_star"]) ** 2
    pen += 1e3 * hinge(r["knee_st"] + 0.04) ** 2
    pen += 1e3 * hinge(0.04 - r["knee_sw"]) ** 2
    pen += 1e2 * hinge(0.05 + r["dpv_dth_end"]) ** 2
    if not r["pv_all_positive"]:
        pen += 10.0
    if full:
        return pen, r, gait, info
    return pen


def design_base_gait(
    biped: Biped,
    cfg: DesignConfig | None = None,
    ctrl: ControllerConfig | None = None,
    sim: SimConfig | None = None,
):
    """Search for a periodic, exponentially stable, constraint-feasible base
    gait near the target speed, then certify it with full-order simulation.

    Returns (GaitParams, LimitCycleRecord, diagnostics dict).
    """
    cfg = cfg or DesignConfig()
    q_minus = touchdown_posture(biped, cfg.step_length, cfg.knee_flexion, cfg.torso_lean)

    dq_seed = touchdown_velocity(
        biped, q_minus, cfg.toe_vx, cfg.toe_vz, cfg.torso_rate, cfg.stance_rate
    )
    bez_seed, info_seed = pinned_bezier(np.zeros((4, 3)), q_minus, dq_seed, biped)
    if not info_seed["pinned"]:
        raise GaitDesignError(
            "seed touchdown is invalid; adjust posture or touchdown-speed settings: "
            f"{info_seed}"
        )
    for i in range(4):
        bez_seed[i, 2:5] = np.linspace(bez_seed[i, 1], bez_seed[i, 5], 5)[1:4]
    bez_seed[3, 2:5] += cfg.swing_clearance_seed * np.array([0.6, 1.0, 0.6])

    z0 = np.concatenate(
        [bez_seed[:, 2:5].ravel(), [cfg.toe_vx, cfg.toe_vz, cfg.torso_rate, cfg.stance_rate]]
    )
    res = minimize(
        _design_objective,
        z0,
        args=(q_minus, biped, cfg),
        method="Nelder-Mead",
        options=dict(
            maxiter=cfg.max_iter,
            maxfev=int(1.5 * cfg.max_iter),
            xatol=1e-6,
            fatol=1e-8,
            adaptive=True,
        ),
    )
    value = _design_objective(res.x, q_minus, biped, cfg, full=True)
    if not isinstance(value, tuple):
        raise GaitDesignError(
            f"gait search failed: best objective {res.fun:.3e} is still infeasible"
        )
    pen, reduced, gait, info = value
    if abs(reduced["speed"] - cfg.target_speed) > cfg.speed_tol:
        raise GaitDesignError(
            f"designed speed {reduced['speed']:.3f} misses target {cfg.target_speed:.3f} "
            f"by more than {cfg.speed_tol}"
        )

    record = certify_gait(gait, biped, reduced["zeta_star"], 0, ctrl, sim)
    diagnostics = {
        "objective": float(res.fun),
        "iterations": int(res.nit),
        "reduced": {
            k: reduced[k]
            for k in (
                "delta2", "zeta_star", "V_end", "K", "speed", "period", "umax",
                "fn_min", "fr_max", "clearance", "domain_margin",
            )
        },
        "design_vector": res.x.tolist(),
        "q_minus": q_minus.tolist(),
        "touchdown": {k: (v.tolist() if isinstance(v, np.ndarray) else v)
                      for k, v in info.items()},
    }
    return gait, record, diagnostics


# ----------------------------------------------------------------------
# Speed modulation and the family
# ----------------------------------------------------------------------


def speed_sensitivity(
    base_record: LimitCycleRecord,
    base_gait: GaitParams,
    biped: Biped,
    ctrl: ControllerConfig | None = None,
    sim: SimConfig | None = None,
    fd_step: float = 1e-4,
) -> np.ndarray:
    """One-step average-speed sensitivity to the modulation amplitudes at
    the base fixed point, by central differences."""
    x_star = State.from_vector(base_record.x_star)
    J = np.zeros(4)
    for i in range(4):
        e = np.zeros(4)
        e[i] = fd_step
        vp = poincare_step(x_star, base_gait.with_beta(+e), biped, ctrl, sim,
                           diagnostics=False).avg_speed
        vm = poincare_step(x_star, base_gait.with_beta(-e), biped, ctrl, sim,
                           diagnostics=False).avg_speed
        J[i] = (vp - vm) / (2.0 * fd_step)
    if np.abs(J).max() == 0.0:
        raise GaitDesignError("speed is insensitive to the modulation amplitudes")
    return J


def beta_for_speed(v_des: float, base_record: LimitCycleRecord,
                   sensitivity: np.ndarray) -> np.ndarray:
    """Right-pseudoinverse speed targeting: smallest-norm amplitude whose
    linearized one-step speed moves from the base speed toward v_des.

    The linearization is not exact, but the sign of (v_des - v_base) is
    preserved by the resulting gait's speed."""
    J = np.asarray(sensitivity, dtype=float).reshape(4)
    jj = float(J @ J)
    if jj == 0.0:
        raise GaitDesignError("zero speed-sensitivity row")
    return J * (v_des - base_record.speed) / jj


def generate_continuum(
    base_gait: GaitParams,
    base_record: LimitCycleRecord,
    biped: Biped,
    speed_lo: float,
    speed_hi: float,
    max_gap: float = 0.01,
    ctrl: ControllerConfig | None = None,
    sim: SimConfig | None = None,
    min_des_step: float = 1e-5,
    provenance: dict | None = None,
) -> tuple[GaitFamily, dict]:
    """Grow the certified family outward from the base gait until the
    requested speed range is covered or certification fails.

    Candidates come from the pseudoinverse speed targeting; the target
    increment adapts so consecutive certified speeds differ by at most
    max_gap.  Neighbors warm-start each fit.  Returns the family and a
    report with the reachable range and any truncation reasons.
    """
    if not speed_lo < base_record.speed < speed_hi:
        raise GaitDesignError("base speed must lie inside the requested range")
    sens = speed_sensitivity(base_record, base_gait, biped, ctrl, sim)

    records = [base_record]
    report = {"truncated_lo": None, "truncated_hi": None, "attempts": 0}

    for direction, bound in ((-1.0, speed_lo), (+1.0, speed_hi)):
        last = base_record
        v_des_last = base_record.speed
        des_step = max_gap / 4.0
        while direction * (bound - last.speed) > 1e-9:
            if des_step < min_des_step:
                key = "truncated_lo" if direction < 0 else "truncated_hi"
                report[key] = f"continuation stalled at {last.speed:.4f} m/s"
                break
            v_des = v_des_last + direction * des_step
            beta = beta_for_speed(v_des, base_record, sens)
            gait = base_gait.with_beta(beta)
            report["attempts"] += 1
            try:
                rec = certify_gait(gait, biped, last.zeta_star, 0, ctrl, sim)
            except (GaitswitchError, ValueError):
                des_step *= 0.5
                continue
            gap = abs(rec.speed - last.speed)
            if gap > max_gap:
                des_step *= 0.5 * max(max_gap / gap, 0.2)
                continue
            if abs(rec.delta2 - base_record.delta2) > 1e-6:
                des_step *= 0.5
                continue
            if direction * (rec.speed - last.speed) <= 0.0:
                des_step *= 0.5
                continue
            over = direction * (rec.speed - bound)
            records.append(rec)
            last = rec
            v_des_last = v_des
            if over >= 0.0:
                break
            if gap < 0.25 * max_gap:
                des_step *= 2.0

    family = GaitFamily(
        base=base_gait,
        records=records,
        model_hash=model_hash(biped.params),
        provenance=dict(provenance or {}, sensitivity=sens.tolist(), max_gap=max_gap,
                        requested=[speed_lo, speed_hi]),
    )
    speeds = family.speeds
    report["range"] = [float(speeds.min()), float(speeds.max())]
    report["count"] = len(family)
    report["max_gap_measured"] = float(np.diff(speeds).max()) if len(family) > 1 else 0.0
    return family, report
