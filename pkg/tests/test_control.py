"""Controller checks: linearization residuals, auxiliary-loop time scaling,
and the constrained QP layer against enumeration and KKT oracles."""

import itertools

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from gaitswitch import State
from gaitswitch import _kernels as K
from gaitswitch.control import ControllerConfig, aux_nu, clf_qp_nu, pd_torque, u_star
from gaitswitch.outputs import lie_derivatives
from gaitswitch.qpsolver import QPInfeasibleError, solve_qp

from conftest import make_synthetic_gait


class TestNominalTorque:
    def test_algebraic_residual(self, biped, rng):
        gait = make_synthetic_gait(11, beta=[0.02, -0.01, 0.03, 0.01])
        for _ in range(20):
            q = rng.normal(0.0, 0.3, 5)
            dq = rng.normal(0.0, 1.5, 5)
            st = State(q, dq)
            u = u_star(st, gait, biped)
            _, _, Lf2, A = lie_derivatives(st, gait, biped)
            resid = A @ u + Lf2
            assert np.abs(resid).max() < 1e-10 * max(1.0, np.abs(Lf2).max())

    def test_pd_equals_nominal_on_surface(self, biped, rng):
        gait = make_synthetic_gait(12)
        cfg = ControllerConfig()
        bez, aux = gait.pack()
        for _ in range(10):
            th = rng.uniform(-0.2, 0.2)
            q, w = K.phase_config(th, bez, aux)
            st = State(q, w * 1.8)
            u_nom = u_star(st, gait, biped)
            u_pd = pd_torque(st, gait, biped, cfg)
            assert np.abs(u_nom - u_pd).max() < 1e-6


class TestAuxiliaryLoop:
    def test_quiescent_on_manifold(self):
        cfg = ControllerConfig()
        assert np.all(aux_nu(np.zeros(4), np.zeros(4), cfg) == 0.0)

    @staticmethod
    def _step_response(cfg, y0=1.0, t_end=1.0):
        def f(t, z):
            y, yd = z[:4], z[4:]
            return np.concatenate([yd, aux_nu(y, yd, cfg)])

        z0 = np.zeros(8)
        z0[0] = y0
        sol = solve_ivp(f, (0.0, t_end), z0, rtol=1e-11, atol=1e-12, dense_output=True)
        return sol

    def test_decay_rate_at_least_inverse_epsilon(self):
        cfg = ControllerConfig()
        sol = self._step_response(cfg, t_end=12.0 * cfg.eps)
        t1, t2 = 2.0 * cfg.eps, 10.0 * cfg.eps
        y1 = abs(sol.sol(t1)[0])
        y2 = abs(sol.sol(t2)[0])
        rate = np.log(y1 / y2) / (t2 - t1)
        assert rate >= 1.0 / cfg.eps

    def test_settling_time_scales_with_epsilon(self):
        def settling(cfg):
            sol = self._step_response(cfg, t_end=30.0 * cfg.eps)
            ts = np.linspace(0.0, 30.0 * cfg.eps, 20_000)
            ys = np.abs(sol.sol(ts)[0])
            below = np.nonzero(ys < 1e-6)[0]
            assert below.size
            return ts[below[0]]

        t_full = settling(ControllerConfig(eps=0.05))
        t_half = settling(ControllerConfig(eps=0.025))
        assert t_half <= 0.5 * t_full * 1.1


class TestOffManifoldDecay:
    def test_lyapunov_norm_monotone(self, biped):
        # Perturb the output error off the constraint surface and verify the
        # closed-loop error decays monotonically in the certificate norm.
        from scipy.linalg import solve_lyapunov

        from gaitswitch import _kernels as K
        from gaitswitch.outputs import lie_derivatives

        gait = make_synthetic_gait(21)
        cfg = ControllerConfig()
        bez, aux = gait.pack()
        q, w = K.phase_config(-0.1, bez, aux)
        x0 = np.concatenate([q, w * 1.5])
        x0[1] += 4e-3
        x0[8] -= 3e-2

        # Closed-loop error system eta' = F eta; P solves F^T P + P F = -I.
        F = np.zeros((8, 8))
        F[:4, 4:] = np.eye(4)
        F[4:, :4] = -(cfg.kp / cfg.eps**2) * np.eye(4)
        F[4:, 4:] = -(cfg.kd / cfg.eps) * np.eye(4)
        P = solve_lyapunov(F.T, -np.eye(8))

        status, n, ts, xs, _, _ = K.integrate_swing(
            x0, bez, aux, biped.mp, cfg.kp, cfg.kd, cfg.eps, K.MODE_PD,
            1e-11, 1e-11, 0.02, 0.12, 40_000, False, False,
        )
        assert status == K.STATUS_NO_IMPACT  # short horizon, no touchdown
        vals = []
        for i in range(0, n, 4):
            st = State(xs[i][:5], xs[i][5:])
            y, ydot, _, _ = lie_derivatives(st, gait, biped)
            eta = np.concatenate([y, ydot])
            vals.append(eta @ P @ eta)
        vals = np.asarray(vals)
        assert vals[0] > 1e-8
        assert np.all(np.diff(vals) <= 1e-12 * vals[0])
        assert vals[-1] < 1e-3 * vals[0]


def brute_force_qp(G, a, C, b):
    """Enumerate active subsets and take the best KKT-consistent point."""
    n = a.size
    m = b.size
    best = None
    for k in range(0, n + 1):
        for subset in itertools.combinations(range(m), k):
            N = C[list(subset)]
            KKT = np.block([[G, -N.T], [N, np.zeros((k, k))]]) if k else G
            rhs = np.concatenate([-a, b[list(subset)]]) if k else -a
            try:
                sol = np.linalg.solve(KKT, rhs)
            except np.linalg.LinAlgError:
                continue
            x, lam = sol[:n], sol[n:]
            if np.any(lam < -1e-9):
                continue
            if np.any(C @ x - b < -1e-9):
                continue
            f = 0.5 * x @ G @ x + a @ x
            if best is None or f < best[0]:
                best = (f, x)
    return best


class TestQPSolver:
    def _random_feasible(self, rng, n, m):
        A = rng.normal(0.0, 1.0, (n, n))
        G = A @ A.T + n * np.eye(n)
        a = rng.normal(0.0, 2.0, n)
        C = rng.normal(0.0, 1.0, (m, n))
        x0 = rng.normal(0.0, 1.0, n)
        b = C @ x0 - rng.uniform(0.0, 2.0, m)
        return G, a, C, b

    def test_kkt_residuals(self, rng):
        for _ in range(50):
            G, a, C, b = self._random_feasible(rng, 5, 12)
            res = solve_qp(G, a, C, b)
            x, lam = res.x, res.multipliers
            stationarity = G @ x + a - C.T @ lam
            slack = C @ x - b
            assert np.abs(stationarity).max() < 1e-8
            assert slack.min() > -1e-8
            assert lam.min() > -1e-10
            assert np.abs(lam * slack).max() < 1e-8

    def test_matches_enumeration_oracle(self, rng):
        for _ in range(30):
            G, a, C, b = self._random_feasible(rng, 3, 6)
            res = solve_qp(G, a, C, b)
            f = 0.5 * res.x @ G @ res.x + a @ res.x
            f_ref, x_ref = brute_force_qp(G, a, C, b)
            assert f == pytest.approx(f_ref, abs=1e-8)
            assert np.abs(res.x - x_ref).max() < 1e-6

    def test_unconstrained_optimum_when_interior(self):
        G = np.diag([2.0, 4.0])
        a = np.array([-2.0, 4.0])
        C = np.array([[1.0, 0.0], [0.0, 1.0]])
        b = np.array([-100.0, -100.0])
        res = solve_qp(G, a, C, b)
        assert np.abs(res.x - np.array([1.0, -1.0])).max() < 1e-12
        assert not res.active

    def test_single_variable_saturation_exact(self):
        # Torque-bound toy: min mu^2 with u* + mu <= tau and tau < u*.
        ustar, tau = 30.0, 12.0
        res = solve_qp(np.array([[2.0]]), np.zeros(1), np.array([[-1.0]]), np.array([ustar - tau]))
        assert ustar + res.x[0] == pytest.approx(tau, abs=1e-12)

    def test_infeasible_detected(self):
        G = np.eye(1)
        a = np.zeros(1)
        C = np.array([[1.0], [-1.0]])
        b = np.array([1.0, 1.0])  # x >= 1 and x <= -1
        with pytest.raises(QPInfeasibleError):
            solve_qp(G, a, C, b)


class TestClfQp:
    def test_matches_nominal_on_surface(self, biped, rng):
        # Premise: every constraint inactive at the nominal torque; then the
        # unconstrained optimum of the QP is the nominal controller itself.
        gait = make_synthetic_gait(13)
        p = biped.params
        cfg = ControllerConfig(mode="clf-qp")
        bez, aux = gait.pack()
        tested = 0
        for th in np.linspace(-0.18, 0.18, 12):
            q, w = K.phase_config(th, bez, aux)
            st = State(q, w * 0.6)
            u_nom = u_star(st, gait, biped)
            f = biped.ground_reaction(st, u_nom)
            interior = (
                np.abs(u_nom).max() < 0.9 * p.torque_limit
                and f.normal > 1.1 * p.min_normal_force
                and f.friction_ratio() < 0.9 * p.friction_limit
            )
            if not interior:
                continue
            u_qp, info = clf_qp_nu(st, gait, biped, cfg)
            assert not info["fallback"]
            assert np.abs(u_qp - u_nom).max() < 1e-6
            tested += 1
        assert tested >= 5

    def test_fallback_on_infeasible(self, biped, monkeypatch, rng):
        gait = make_synthetic_gait(14)
        cfg = ControllerConfig(mode="clf-qp")

        def always_infeasible(*args, **kwargs):
            raise QPInfeasibleError("forced")

        monkeypatch.setattr("gaitswitch.control.solve_qp", always_infeasible)
        st = State(rng.normal(0.0, 0.2, 5), rng.normal(0.0, 1.0, 5))
        u, info = clf_qp_nu(st, gait, biped, cfg)
        assert info["fallback"]
        assert np.abs(u).max() <= biped.params.torque_limit + 1e-12


class TestControllerConfig:
    def test_rejects_nonpositive_gains(self):
        with pytest.raises(ValueError):
            ControllerConfig(kp=-1.0)

    def test_rejects_unknown_mode(self):
        with pytest.raises(ValueError):
            ControllerConfig(mode="bang-bang")
