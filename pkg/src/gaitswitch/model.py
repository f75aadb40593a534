"""Planar five-link biped: parameters, kinematics, rigid-body dynamics and
the plastic touchdown map.

Coordinate convention
---------------------
The robot is a serial chain pinned at the stance toe: stance shank, stance
thigh, torso, swing thigh, swing shank.  Generalized coordinates:

    q1  absolute stance-shank angle, measured from the upward vertical,
        positive when the link top leans in the walking (+x) direction
    q2  stance knee, thigh relative to shank     (actuated)
    q3  stance hip, torso relative to thigh      (actuated)
    q4  swing hip, swing thigh relative to torso (actuated)
    q5  swing knee, swing shank relative to thigh(actuated)

Only q1 is unactuated (passive toe pivot).  The gait phase is
theta(q) = q1 + q2 + q4/2; with this chain it decreases by one step's sweep
at each leg relabeling, so it ranges over a fixed interval every step.

A flexed stance knee has q2 < 0 and a flexed swing knee q5 > 0; the
relabeling map exchanges them consistently.

Both thighs and both shanks share one parameter set: the touchdown
relabeling assumes left/right symmetric legs.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict
from typing import Tuple

import numpy as np

from . import _kernels as K


class GaitswitchError(Exception):
    """Base class for all package errors."""


class SingularImpactError(GaitswitchError):
    """Touchdown contact solve was ill conditioned."""


@dataclass(frozen=True)
class ModelParams:
    """Masses (kg), lengths (m), COM offsets from the proximal joint (m),
    rotational inertias about the COM (kg m^2), plus actuation and contact
    limits used by the feasibility monitors."""

    torso_mass: float = 12.0
    thigh_mass: float = 6.8
    shank_mass: float = 3.2
    torso_length: float = 0.625
    thigh_length: float = 0.4
    shank_length: float = 0.4
    torso_com: float = 0.2    # from hip, toward torso top
    thigh_com: float = 0.11   # from hip, toward knee
    shank_com: float = 0.24   # from knee, toward toe
    torso_inertia: float = 1.33
    thigh_inertia: float = 0.47
    shank_inertia: float = 0.2
    gravity: float = 9.81
    torque_limit: float = 100.0   # N m, per actuated joint
    friction_limit: float = 0.8   # max |Ft|/Fn
    min_normal_force: float = 100.0  # N

    def __post_init__(self):
        positive = (
            self.torso_mass, self.thigh_mass, self.shank_mass,
            self.torso_length, self.thigh_length, self.shank_length,
            self.torso_com, self.thigh_com, self.shank_com,
            self.torso_inertia, self.thigh_inertia, self.shank_inertia,
            self.gravity, self.torque_limit,
        )
        if any(v <= 0.0 for v in positive):
            raise ValueError("masses, lengths, inertias, gravity and torque limit must be positive")
        if not 0.0 < self.friction_limit <= 1.0:
            raise ValueError("friction limit must lie in (0, 1]")
        if self.min_normal_force < 0.0:
            raise ValueError("minimum normal force must be nonnegative")
        if self.torso_com > self.torso_length or self.thigh_com > self.thigh_length \
                or self.shank_com > self.shank_length:
            raise ValueError("COM offsets cannot exceed link lengths")

    @property
    def total_mass(self) -> float:
        return self.torso_mass + 2.0 * self.thigh_mass + 2.0 * self.shank_mass

    def as_dict(self) -> dict:
        return asdict(self)


# Link order used throughout: stance shank, stance thigh, torso, swing
# thigh, swing shank.

def link_masses(p: ModelParams) -> np.ndarray:
    return np.array([p.shank_mass, p.thigh_mass, p.torso_mass, p.thigh_mass, p.shank_mass])


def link_inertias(p: ModelParams) -> np.ndarray:
    return np.array([p.shank_inertia, p.thigh_inertia, p.torso_inertia,
                     p.thigh_inertia, p.shank_inertia])


def fk_coefficients(p: ModelParams) -> np.ndarray:
    """Per-link COM positions as r_i = sum_k coef[i, k] * u(a_k) with
    u(a) = (sin a, cos a) and a_k the absolute link angles."""
    ls, lt, cT, ct, cs = p.shank_length, p.thigh_length, p.torso_com, p.thigh_com, p.shank_com
    coef = np.zeros((5, 5))
    coef[0, 0] = ls - cs
    coef[1, 0] = ls
    coef[1, 1] = lt - ct
    coef[2, 0] = ls
    coef[2, 1] = lt
    coef[2, 2] = cT
    coef[3, 0] = ls
    coef[3, 1] = lt
    coef[3, 3] = -ct
    coef[4, 0] = ls
    coef[4, 1] = lt
    coef[4, 3] = -lt
    coef[4, 4] = -cs
    return coef


def pack_params(p: ModelParams) -> np.ndarray:
    """Flatten the derived dynamic coefficients into the kernel layout."""
    coef = fk_coefficients(p)
    m = link_masses(p)
    inertia = link_inertias(p)

    G = np.einsum("i,ik,il->kl", m, coef, coef)
    s = m @ coef
    W = np.tril(np.ones((5, 5)))
    Ibar = np.einsum("i,ik,il->kl", inertia, W, W)
    dsw = np.array([p.shank_length, p.thigh_length, 0.0, -p.thigh_length, -p.shank_length])

    mp = np.empty(62)
    mp[0:25] = G.ravel()
    mp[25:30] = s
    mp[30:55] = Ibar.ravel()
    mp[55:60] = dsw
    mp[60] = p.total_mass
    mp[61] = p.gravity
    return mp


@dataclass
class State:
    """Full robot state (q, dq), both length-5 arrays."""

    q: np.ndarray
    dq: np.ndarray

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float).reshape(5)
        self.dq = np.asarray(self.dq, dtype=float).reshape(5)

    @classmethod
    def from_vector(cls, x: np.ndarray) -> "State":
        x = np.asarray(x, dtype=float).reshape(10)
        return cls(x[:5].copy(), x[5:].copy())

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.q, self.dq])


@dataclass(frozen=True)
class GroundForce:
    """Stance-pivot reaction. Reported, never assumed: feasibility checks
    test normal-force floor and friction-cone membership downstream."""

    tangential: float
    normal: float

    def friction_ratio(self) -> float:
        return abs(self.tangential) / self.normal if self.normal > 0.0 else np.inf


class Biped:
    """Convenience wrapper binding ModelParams to the compiled kernels."""

    def __init__(self, params: ModelParams | None = None):
        self.params = params or ModelParams()
        self.mp = pack_params(self.params)

    # -- continuous dynamics -------------------------------------------------

    def mass_matrix(self, q: np.ndarray) -> np.ndarray:
        return K.mass_matrix(np.asarray(q, dtype=float), self.mp)

    def mass_matrix_deriv(self, q: np.ndarray) -> np.ndarray:
        return K.mass_matrix_deriv(np.asarray(q, dtype=float), self.mp)

    def coriolis_matrix(self, q: np.ndarray, dq: np.ndarray) -> np.ndarray:
        return K.coriolis_matrix(np.asarray(q, float), np.asarray(dq, float), self.mp)

    def gravity_vector(self, q: np.ndarray) -> np.ndarray:
        return K.gravity_vector(np.asarray(q, dtype=float), self.mp)

    def bias_forces(self, q: np.ndarray, dq: np.ndarray) -> np.ndarray:
        return K.bias_forces(np.asarray(q, float), np.asarray(dq, float), self.mp)

    def potential_energy(self, q: np.ndarray) -> float:
        return K.potential_energy(np.asarray(q, dtype=float), self.mp)

    def kinetic_energy(self, q: np.ndarray, dq: np.ndarray) -> float:
        return K.kinetic_energy(np.asarray(q, float), np.asarray(dq, float), self.mp)

    def total_energy(self, state: State) -> float:
        return self.kinetic_energy(state.q, state.dq) + self.potential_energy(state.q)

    def forward_dynamics(self, state: State, u: np.ndarray) -> np.ndarray:
        """Joint accelerations for applied torques u (4,) on the actuated
        joints q2..q5."""
        D = self.mass_matrix(state.q)
        bias = self.bias_forces(state.q, state.dq)
        gen = -bias
        gen[1:] += np.asarray(u, dtype=float).reshape(4)
        return np.linalg.solve(D, gen)

    # -- kinematics ----------------------------------------------------------

    def theta(self, q: np.ndarray) -> float:
        return float(K.theta_of(np.asarray(q, dtype=float)))

    def swing_foot_position(self, q: np.ndarray) -> Tuple[float, float]:
        return K.swing_foot(np.asarray(q, dtype=float), self.mp)

    def swing_foot_height(self, q: np.ndarray) -> float:
        return self.swing_foot_position(q)[1]

    def swing_foot_velocity(self, state: State) -> Tuple[float, float]:
        return K.swing_foot_vel(state.q, state.dq, self.mp)

    def sigma(self, state: State) -> float:
        """Generalized momentum conjugate to q1."""
        return float(K.sigma_of(state.q, state.dq, self.mp))

    def zeta(self, state: State) -> float:
        """Momentum coordinate 0.5 * (D_1(q) dq)^2 used by the reduced map."""
        return float(K.zeta_of(state.q, state.dq, self.mp))

    # -- contact -------------------------------------------------------------

    def ground_reaction(self, state: State, u: np.ndarray) -> GroundForce:
        qdd = self.forward_dynamics(state, u)
        ft, fn = K.ground_reaction(state.q, state.dq, qdd, self.mp)
        return GroundForce(float(ft), float(fn))

    def impact_map(self, state: State) -> State:
        """Plastic touchdown followed by leg relabeling.

        The configuration is relabeled exactly; velocities come from the
        momentum-conserving contact solve on the floating-base extension
        with the fresh stance toe brought to rest.
        """
        q2, dq2, ok, cond, _, _, _ = K.impact_transition(state.q, state.dq, self.mp)
        if not ok:
            raise SingularImpactError(f"touchdown contact solve ill conditioned (cond={cond:.3e})")
        return State(q2, dq2)

    def impact_details(self, state: State) -> dict:
        q2, dq2, ok, cond, ke_pre, ke_post, pvdot = K.impact_transition(state.q, state.dq, self.mp)
        return {
            "state": State(q2, dq2),
            "ok": bool(ok),
            "cond": float(cond),
            "ke_pre": float(ke_pre),
            "ke_post": float(ke_post),
            "new_swing_pvdot": float(pvdot),
        }


def relabel_configuration(q: np.ndarray) -> np.ndarray:
    """Leg-swap coordinate change (an involution)."""
    return K.RELABEL @ np.asarray(q, dtype=float)
