"""Hybrid simulation: event location, return-map properties, stability
spectrum, and switched runs against the affine stride map."""

import numpy as np
import pytest

from gaitswitch import State
from gaitswitch.sim import (
    GaitValidityError,
    InvalidImpactError,
    NoImpactError,
    SimConfig,
    SwitchSignal,
    integrate_step,
    poincare,
    poincare_jacobian,
    poincare_step,
    run_switched,
    section_state,
)


class TestIntegrateStep:
    def test_touchdown_located_on_surface(self, base_gait, biped):
        gait, rec = base_gait
        x_star = State.from_vector(rec.x_star)
        post = biped.impact_map(x_star)
        step = integrate_step(post, gait, biped)
        assert abs(biped.swing_foot_height(step.x_minus.q)) < 1e-10
        assert biped.swing_foot_velocity(step.x_minus)[1] < 0.0
        assert step.duration > 0.0

    def test_phase_monotone_along_step(self, base_gait, biped):
        gait, rec = base_gait
        step = poincare_step(State.from_vector(rec.x_star), gait, biped)
        assert np.all(np.diff(step.theta) > -1e-12)

    def test_tolerance_refinement(self, base_gait, biped):
        # Halving the tolerance moves the touchdown state by less than ten
        # times the (original) tolerance.
        gait, rec = base_gait
        x_star = State.from_vector(rec.x_star)
        tol = 1e-12
        a = poincare(x_star, gait, biped, sim=SimConfig(rtol=tol, atol=tol))
        b = poincare(x_star, gait, biped, sim=SimConfig(rtol=tol / 2, atol=tol / 2))
        assert np.abs(a.as_vector() - b.as_vector()).max() < 10.0 * tol * 1e2

    def test_no_touchdown_raises(self, base_gait, biped):
        # A healthy stride lasts ~0.56 s; a tighter cap must surface as the
        # fall/no-touchdown error.
        gait, rec = base_gait
        post = biped.impact_map(State.from_vector(rec.x_star))
        with pytest.raises(NoImpactError):
            integrate_step(post, gait, biped, sim=SimConfig(max_step_time=0.3))

    def test_phase_reversal_raises(self, base_gait, biped):
        gait, rec = base_gait
        x_star = State.from_vector(rec.x_star)
        post = biped.impact_map(x_star)
        backwards = State(post.q, -post.dq)
        with pytest.raises((GaitValidityError, NoImpactError)):
            integrate_step(backwards, gait, biped, sim=SimConfig(max_step_time=0.5))

    def test_constraint_samples_recorded(self, base_gait, biped):
        gait, rec = base_gait
        step = poincare_step(State.from_vector(rec.x_star), gait, biped)
        n = len(step.times)
        assert step.torques.shape == (n, 4)
        assert step.monitor.clean
        assert step.f_normal.min() >= biped.params.min_normal_force


class TestPoincare:
    def test_fixed_point(self, base_gait, biped):
        gait, rec = base_gait
        x_star = State.from_vector(rec.x_star)
        x_next = poincare(x_star, gait, biped)
        assert np.abs(x_next.as_vector() - rec.x_star).max() < 1e-8

    def test_hybrid_invariance_of_constraint_surface(self, family, biped, fast_sim):
        # Points of the section inside the surface map back into it for any
        # modulation amplitude.
        from gaitswitch.outputs import lie_derivatives

        for idx in (0, len(family) // 2, len(family) - 1):
            gait = family.gait(idx)
            x = section_state(gait, biped, 295.0)
            x_next = poincare(x, gait, biped, sim=fast_sim)
            y, ydot, _, _ = lie_derivatives(x_next, gait, biped)
            assert np.abs(y).max() < 1e-6
            assert np.abs(ydot).max() < 1e-6
            assert abs(biped.swing_foot_height(x_next.q)) < 1e-8

    def test_contraction_near_fixed_point(self, base_gait, biped):
        gait, rec = base_gait
        x_star = State.from_vector(rec.x_star)
        x = section_state(gait, biped, rec.zeta_star + 8.0)
        d0 = np.abs(x.as_vector() - x_star.as_vector()).max()
        x1 = poincare(x, gait, biped)
        x2 = poincare(x1, gait, biped)
        d2 = np.abs(x2.as_vector() - x_star.as_vector()).max()
        assert d2 < d0

    def test_invalid_impact_flagged(self, base_gait, biped):
        gait, rec = base_gait
        x_star = State.from_vector(rec.x_star)
        rising = State(x_star.q, -x_star.dq)  # swing toe moving upward
        with pytest.raises(InvalidImpactError):
            poincare(rising, gait, biped)


@pytest.fixture(scope="module")
def jacobian(base_gait, biped, fast_sim):
    gait, rec = base_gait
    return poincare_jacobian(State.from_vector(rec.x_star), gait, biped, sim=fast_sim)


class TestPoincareJacobian:
    def test_no_unit_eigenvalue(self, jacobian):
        _, eigs = jacobian
        assert np.abs(eigs - 1.0).min() > 1e-3

    def test_spectral_radius_below_one(self, jacobian, base_gait):
        _, eigs = jacobian
        rho = np.abs(eigs).max()
        assert rho < 1.0
        # With fast transverse dynamics the dominant direction is the
        # momentum coordinate: the radius matches the stride contraction.
        assert abs(rho - base_gait[1].delta2) < 1e-3

    def test_step_size_robustness(self, base_gait, biped, jacobian, fast_sim):
        gait, rec = base_gait
        _, eigs = jacobian
        _, eigs2 = poincare_jacobian(State.from_vector(rec.x_star), gait, biped,
                                     sim=fast_sim, fd_step=2e-6)
        assert abs(np.abs(eigs2).max() - np.abs(eigs).max()) < 1e-3


class TestZeta:
    def test_zero_velocity(self, biped, rng):
        assert biped.zeta(State(rng.normal(0.0, 0.3, 5), np.zeros(5))) == 0.0

    def test_nonnegative(self, biped, rng):
        for _ in range(20):
            st = State(rng.normal(0.0, 0.3, 5), rng.normal(0.0, 2.0, 5))
            assert biped.zeta(st) >= 0.0

    def test_fixed_point_matches_reduced_map(self, base_gait, biped):
        # zeta at the simulated fixed point equals -V/(1 - delta2) from the
        # fitted stride map.
        gait, rec = base_gait
        implied = -rec.v_end / (1.0 - rec.delta2)
        z = biped.zeta(State.from_vector(rec.x_star))
        assert abs(z - implied) / implied < 1e-8


class TestRunSwitched:
    def test_constant_signal_is_periodic(self, family, biped, fast_sim):
        idx = len(family) // 2
        rec = family.records[idx]
        x0 = State.from_vector(rec.x_star)
        records, x_end = run_switched(x0, [idx] * 5, family.gaits(), biped,
                                      sim=fast_sim, diagnostics=False)
        assert np.abs(x_end.as_vector() - rec.x_star).max() < 1e-8
        for r in records:
            assert abs(r.zeta_minus - rec.zeta_star) < 1e-6

    def test_random_signal_stays_bounded(self, family, biped, fast_sim, rng):
        from gaitswitch.graph import theorem2_check

        rep = theorem2_check(family)
        assert rep.passed
        sig = SwitchSignal(rng.integers(0, len(family), 150))
        x0 = section_state(family.gait(sig(0)), biped, family.records[sig(0)].zeta_star)
        records, _ = run_switched(x0, sig, family.gaits(), biped, sim=fast_sim,
                                  diagnostics=False)
        tol = 1e-6 * rep.zeta_ub
        for r in records:
            assert rep.zeta_lb - tol <= r.zeta_minus <= rep.zeta_ub + tol

    def test_matches_affine_replay(self, family, biped, fast_sim, rng):
        sig = SwitchSignal(rng.integers(0, len(family), 80))
        x0 = section_state(family.gait(sig(0)), biped, family.records[sig(0)].zeta_star)
        records, _ = run_switched(x0, sig, family.gaits(), biped, sim=fast_sim,
                                  diagnostics=False)
        d2 = family.delta2
        zhat = biped.zeta(x0)
        for k, r in enumerate(records):
            zhat = d2 * zhat + (1.0 - d2) * family.records[sig(k)].zeta_star
            assert abs(r.zeta_minus - zhat) / zhat < 1e-6

    def test_outputs_pinned_under_switching(self, family, biped, fast_sim, rng):
        # Started on the section inside the surface, the tracking error
        # stays numerically zero for the whole run regardless of switching.
        sig = SwitchSignal(rng.integers(0, len(family), 12))
        x0 = section_state(family.gait(sig(0)), biped, family.records[sig(0)].zeta_star)
        records, _ = run_switched(x0, sig, family.gaits(), biped, sim=fast_sim,
                                  diagnostics=True)
        assert max(r.output_norm_max for r in records) < 1e-6


class TestStrideInvariants:
    def test_step_geometry_constant_across_family(self, family):
        # Touchdown geometry is untouched by the modulation: phase interval
        # and step length agree across every member.
        th_p = [r.theta_plus for r in family.records]
        th_m = [r.theta_minus for r in family.records]
        sl = [r.step_length for r in family.records]
        assert np.ptp(th_p) < 1e-8
        assert np.ptp(th_m) < 1e-8
        assert np.ptp(sl) < 1e-8

    def test_speed_strictly_increasing(self, family):
        assert np.all(np.diff(family.speeds) > 0.0)
