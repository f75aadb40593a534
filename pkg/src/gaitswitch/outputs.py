"""Phase-indexed gait outputs: base Bezier joint trajectories, the
speed-modulation bump polynomial, and the relative-degree-two quantities
the controller needs.

The tracked outputs are y = q_a - h_d(theta) - h_s(theta, beta) with
q_a = (q2..q5) and theta the gait phase.  The bump term h_s is a single
degree-5 polynomial b(theta), shared by all joints and scaled per joint by
beta, that vanishes with its slope at the step start and vanishes to second
order at 90% of the phase interval, staying identically zero afterwards.
Consequently the modulation never moves the step's touchdown geometry:
every beta produces the same pre- and post-impact configuration.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from . import _kernels as K
from .model import Biped, GaitswitchError, State


class DegenerateIntervalError(GaitswitchError):
    """Phase interval has (near) zero width."""


class DecouplingSingularError(GaitswitchError):
    """Decoupling matrix is singular beyond the conditioning threshold."""


BUMP_FRACTION = 0.9  # fraction of the phase interval after which b == 0


@dataclass(frozen=True)
class BezierOutputs:
    """Bezier coefficients (4 x (M+1)) for the base joint trajectories over
    the normalized phase s = (theta - theta_plus)/(theta_minus - theta_plus)."""

    coeffs: np.ndarray
    theta_plus: float
    theta_minus: float

    def __post_init__(self):
        object.__setattr__(self, "coeffs", np.atleast_2d(np.asarray(self.coeffs, dtype=float)))
        if self.coeffs.shape[0] != 4 or self.coeffs.shape[1] < 4:
            raise ValueError("need a 4 x (M+1) coefficient matrix with M >= 3")
        if abs(self.theta_minus - self.theta_plus) < 1e-12:
            raise DegenerateIntervalError("phase interval has zero width")

    @property
    def degree(self) -> int:
        return self.coeffs.shape[1] - 1

    def eval(self, theta: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Value and first two derivatives with respect to theta."""
        dth = self.theta_minus - self.theta_plus
        s = (theta - self.theta_plus) / dth
        y, dy, d2y = K.bezier_eval(self.coeffs, s)
        return y, dy / dth, d2y / (dth * dth)


@dataclass(frozen=True)
class BumpPolynomial:
    """Degree-5 modulation bump on [theta_plus, theta_stop], zero beyond.

    Carries ascending-power coefficients in theta and is normalized so the
    peak of |b| on the active interval is exactly one.
    """

    coeffs: np.ndarray
    theta_plus: float
    theta_stop: float

    def __post_init__(self):
        object.__setattr__(self, "coeffs", np.asarray(self.coeffs, dtype=float).reshape(6))

    def eval(self, theta: float) -> Tuple[float, float, float]:
        aux = np.zeros(13)
        aux[2] = self.theta_stop
        aux[3:9] = self.coeffs
        return K.bump_eval(aux, theta)


def build_bump(theta_plus: float, theta_minus: float) -> BumpPolynomial:
    """Construct the unit-peak bump for a phase interval.

    The five homogeneous constraints (value and slope zero at theta_plus;
    value, slope and curvature zero at theta_stop) leave a one-dimensional
    null space in the degree-5 coefficient space; its unit-peak element is
    returned, oriented so the peak is +1.
    """
    if abs(theta_minus - theta_plus) < 1e-12:
        raise DegenerateIntervalError("cannot build a bump on a zero-width interval")
    th_s = theta_plus + BUMP_FRACTION * (theta_minus - theta_plus)

    def value_row(t):
        return np.array([t**k for k in range(6)])

    def slope_row(t):
        return np.array([0.0] + [k * t ** (k - 1) for k in range(1, 6)])

    def curvature_row(t):
        return np.array([0.0, 0.0] + [k * (k - 1) * t ** (k - 2) for k in range(2, 6)])

    A = np.vstack(
        [
            value_row(theta_plus),
            slope_row(theta_plus),
            value_row(th_s),
            slope_row(th_s),
            curvature_row(th_s),
        ]
    )
    _, sv, vt = np.linalg.svd(A)
    if sv[-1] < 1e-10 * sv[0]:
        raise DegenerateIntervalError("bump boundary conditions are rank deficient")
    coeffs = vt[-1]  # the one-dimensional null space of the five conditions

    # Peak location from the exact stationary points of the quintic.
    dcoeffs = np.array([k * coeffs[k] for k in range(1, 6)])
    roots = np.roots(dcoeffs[::-1])
    lo, hi = sorted((theta_plus, th_s))
    cand = [r.real for r in roots if abs(r.imag) < 1e-10 and lo < r.real < hi]
    if not cand:
        raise DegenerateIntervalError("bump has no interior extremum")
    vals = np.polyval(coeffs[::-1], cand)
    peak = vals[np.argmax(np.abs(vals))]
    return BumpPolynomial(coeffs / peak, theta_plus, th_s)


@dataclass(frozen=True)
class GaitParams:
    """Base trajectories plus the per-joint modulation amplitudes beta."""

    base: BezierOutputs
    bump: BumpPolynomial
    beta: np.ndarray = field(default_factory=lambda: np.zeros(4))

    def __post_init__(self):
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=float).reshape(4))

    def with_beta(self, beta) -> "GaitParams":
        return GaitParams(self.base, self.bump, np.asarray(beta, dtype=float))

    def pack(self) -> Tuple[np.ndarray, np.ndarray]:
        """Kernel-facing arrays: (bezier matrix, auxiliary vector)."""
        aux = np.empty(13)
        aux[0] = self.base.theta_plus
        aux[1] = self.base.theta_minus
        aux[2] = self.bump.theta_stop
        aux[3:9] = self.bump.coeffs
        aux[9:13] = self.beta
        return self.base.coeffs, aux

    def h_s(self, theta: float) -> np.ndarray:
        """Modulation term per actuated joint; linear in beta."""
        b, _, _ = self.bump.eval(theta)
        return self.beta * b

    def desired_joints(self, theta: float) -> np.ndarray:
        hd, _, _ = self.base.eval(theta)
        return hd + self.h_s(theta)


def output(q: np.ndarray, gait: GaitParams) -> np.ndarray:
    """y = q_a - h_d(theta) - h_s(theta, beta), shape (4,)."""
    bez, aux = gait.pack()
    y, _, _, _ = K.outputs_eval(np.asarray(q, dtype=float), bez, aux)
    return y


def output_jacobian(q: np.ndarray, gait: GaitParams) -> np.ndarray:
    """d(output)/dq, shape (4, 5)."""
    bez, aux = gait.pack()
    _, J, _, _ = K.outputs_eval(np.asarray(q, dtype=float), bez, aux)
    return J


def lie_derivatives(state: State, gait: GaitParams, biped: Biped, cond_limit: float = 1e8):
    """Relative-degree-two data along the controlled dynamics.

    Returns (y, ydot, Lf2, A) with ydot = Lf h, Lf2 = Lf^2 h, and
    A = Lg Lf h the decoupling matrix.  Raises when A is ill conditioned.
    """
    bez, aux = gait.pack()
    q, dq = state.q, state.dq
    y, J, hdd, _ = K.outputs_eval(q, bez, aux)
    ydot = J @ dq

    D = biped.mass_matrix(q)
    bias = biped.bias_forces(q, dq)
    Dinv = np.linalg.inv(D)
    A = J @ Dinv[:, 1:]
    thdot = float(K.C_THETA @ dq)
    Lf2 = -hdd * thdot * thdot - J @ (Dinv @ bias)

    if np.linalg.cond(A) > cond_limit:
        raise DecouplingSingularError(
            f"decoupling matrix condition {np.linalg.cond(A):.2e} exceeds {cond_limit:.1e}"
        )
    return y, ydot, Lf2, A
