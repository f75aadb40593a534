"""Acceptance criteria for the full pipeline, regenerated from scratch.

Every test prints one PASS line (run with -s to stream them); the session
also writes acceptance_report.txt next to this file.  Committed fixtures
are not used: the suite designs the base gait, grows the family past +-15%
of the base speed, builds the switch graph, and executes the speed-change
scenario, asserting each criterion at its stated tolerance.
"""

import itertools
import json
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import pytest

from gaitswitch import Biped, ModelParams, State
from gaitswitch.artifacts import load_family, save_family, write_speed_csv
from gaitswitch.design import design_base_gait, generate_continuum
from gaitswitch.graph import (
    PlanningError,
    build_graph,
    dwell_time_bound,
    plan_path,
    strongly_connected,
    theorem2_check,
)
from gaitswitch.sim import SimConfig, SwitchSignal, poincare, run_switched, section_state
from gaitswitch.supervisor import SpeedSchedule, supervise
from test_graph import brute_force_shortest, graph_from_edges, ring_graph

pytestmark = pytest.mark.acceptance

REPORT = Path(__file__).parent / "acceptance_report.txt"
_LINES = []

# Ensemble-grade integrator: per-stride momentum noise is ~1e-8 relative
# and the stride map contracts it by 1/(1 - delta2) ~ 6, leaving two orders
# of margin under every 1e-6 check that uses these runs.
ENSEMBLE_SIM = SimConfig(rtol=1e-9, atol=1e-9)
EDGE_SIM = SimConfig(rtol=1e-10, atol=1e-10)


def record(name: str, ok: bool, detail: str):
    line = f"ACCEPTANCE {name}: {'PASS' if ok else 'FAIL'} - {detail}"
    _LINES.append(line)
    print("\n" + line)
    assert ok, line


@pytest.fixture(scope="session", autouse=True)
def report_writer():
    _LINES.clear()
    yield
    REPORT.write_text("\n".join(_LINES) + "\n")


@pytest.fixture(scope="session")
def acceptance_base():
    biped = Biped(ModelParams())
    t0 = time.time()
    gait, rec, diag = design_base_gait(biped)
    return {"biped": biped, "gait": gait, "record": rec, "elapsed": time.time() - t0}


@pytest.fixture(scope="session")
def acceptance_family(acceptance_base, tmp_path_factory):
    biped = acceptance_base["biped"]
    rec = acceptance_base["record"]
    lo = 0.84 * rec.speed
    hi = 1.16 * rec.speed
    t0 = time.time()
    family, report = generate_continuum(
        acceptance_base["gait"], rec, biped, lo, hi, max_gap=0.01
    )
    path = tmp_path_factory.mktemp("acceptance") / "family.json"
    save_family(path, family)
    return {"family": family, "report": report, "elapsed": time.time() - t0,
            "path": path, "biped": biped}


@pytest.fixture(scope="session")
def acceptance_graph(acceptance_family):
    t0 = time.time()
    graph = build_graph(
        acceptance_family["family"], acceptance_family["biped"], epsilon=2.0,
        sim=EDGE_SIM,
    )
    return {"graph": graph, "elapsed": time.time() - t0}


class TestBaseGait:
    def test_base_gait_criterion(self, acceptance_base):
        biped = acceptance_base["biped"]
        rec = acceptance_base["record"]
        gait = acceptance_base["gait"]
        p = biped.params

        x_star = State.from_vector(rec.x_star)
        resid = np.abs(poincare(x_star, gait, biped).as_vector() - rec.x_star).max()
        checks = {
            "periodicity": resid < 1e-8,
            "contraction": rec.delta2 < 1.0,
            "spectral_radius": rec.spectral_radius < 1.0,
            "torque": rec.torque_max <= p.torque_limit,
            "friction": rec.friction_ratio_max <= p.friction_limit,
            "normal_force": rec.normal_force_min >= p.min_normal_force,
            "runtime": acceptance_base["elapsed"] < 600.0,
        }
        record(
            "base-gait",
            all(checks.values()),
            f"|P(x*)-x*|={resid:.2e}, delta2={rec.delta2:.6f}, "
            f"rho={rec.spectral_radius:.6f}, u_max={rec.torque_max:.1f} N m, "
            f"Fn_min={rec.normal_force_min:.1f} N, fric={rec.friction_ratio_max:.3f}, "
            f"{acceptance_base['elapsed']:.0f} s"
            + ("" if all(checks.values()) else f"; failed: {checks}"),
        )


class TestAffineReducedMap:
    def test_five_sample_affinity(self, acceptance_family):
        family = acceptance_family["family"]
        biped = acceptance_family["biped"]
        worst = 0.0
        for rec in family.records:
            gait = family.base.with_beta(rec.beta)
            zs = rec.zeta_star * np.array([0.9, 0.97, 1.0, 1.04, 1.1])
            outs = []
            for z in zs:
                step_x = poincare(section_state(gait, biped, z), gait, biped)
                outs.append(biped.zeta(step_x))
            d2 = (outs[1] - outs[0]) / (zs[1] - zs[0])
            v_end = d2 * zs[0] - outs[0]
            for z, out in zip(zs[2:], outs[2:]):
                pred = d2 * z - v_end
                worst = max(worst, abs(out - pred) / abs(pred))
        record(
            "affine-reduced-map",
            worst < 1e-8,
            f"worst 5-sample affinity residual {worst:.2e} over {len(family)} gaits",
        )


class TestTheorem1:
    def test_contraction_and_closure(self, acceptance_family):
        family = acceptance_family["family"]
        d2s = np.array([r.delta2 for r in family.records])
        spread = float(np.ptp(d2s))
        closure = max(r.closure_error() for r in family.records)
        ok = spread < 1e-6 and closure < 1e-8
        record(
            "theorem-1",
            ok,
            f"delta2 spread {spread:.2e} (<1e-6), worst fixed-point closure "
            f"{closure:.2e} (<1e-8), {len(family)} gaits",
        )


class TestRemark1:
    def test_touchdown_geometry_constant(self, acceptance_family):
        family = acceptance_family["family"]
        th_p = np.ptp([r.theta_plus for r in family.records])
        th_m = np.ptp([r.theta_minus for r in family.records])
        sl = np.ptp([r.step_length for r in family.records])
        ok = th_p < 1e-8 and th_m < 1e-8 and sl < 1e-8
        record(
            "remark-1",
            ok,
            f"spread theta+ {th_p:.2e}, theta- {th_m:.2e}, step length {sl:.2e} (<1e-8)",
        )


class TestContinuum:
    def test_range_and_ordering(self, acceptance_base, acceptance_family):
        family = acceptance_family["family"]
        rec0 = acceptance_base["record"]
        speeds = family.speeds
        gaps = np.diff(speeds)
        sens = np.asarray(family.provenance["sensitivity"])

        # Recover each member's requested speed from its amplitude and check
        # the pseudoinverse targeting kept sign and order.
        v_des = rec0.speed + np.array([r.beta @ sens for r in family.records])
        sign_ok = all(
            np.sign(v_des[i] - rec0.speed) == np.sign(speeds[i] - rec0.speed)
            for i in range(len(family))
            if abs(v_des[i] - rec0.speed) > 1e-12
        )
        order_ok = all(
            (v_des[i] - v_des[j]) * (speeds[i] - speeds[j]) > 0
            for i, j in itertools.combinations(range(len(family)), 2)
            if abs(v_des[i] - v_des[j]) > 1e-12
        )
        checks = {
            "count": len(family) >= 20,
            "span_lo": speeds.min() <= 0.85 * rec0.speed,
            "span_hi": speeds.max() >= 1.15 * rec0.speed,
            "gaps": gaps.max() <= 0.01,
            "monotone": np.all(gaps > 0),
            "sign": sign_ok,
            "ordering": order_ok,
            "runtime": acceptance_family["elapsed"] < 1800.0,
        }
        record(
            "continuum",
            all(checks.values()),
            f"{len(family)} gaits, {speeds.min():.4f}..{speeds.max():.4f} m/s "
            f"(base {rec0.speed:.4f}, +-15% -> [{0.85 * rec0.speed:.4f}, "
            f"{1.15 * rec0.speed:.4f}]), max gap {gaps.max():.4f}, "
            f"{acceptance_family['elapsed']:.0f} s"
            + ("" if all(checks.values()) else f"; failed: {checks}"),
        )


def _ensemble_worker(args):
    family_path, seeds, n_steps = args
    biped = Biped(ModelParams())
    family = load_family(family_path, biped.params)
    d2 = family.delta2
    zeta_stars = np.array([r.zeta_star for r in family.records])
    lb, ub = family.zeta_lb, family.zeta_ub
    worst_replay = 0.0
    worst_overshoot = 0.0
    for seed in seeds:
        rng = np.random.default_rng(seed)
        sig = SwitchSignal(rng.integers(0, len(family), n_steps))
        x0 = section_state(family.gait(sig(0)), biped, family.records[sig(0)].zeta_star)
        records, _ = run_switched(x0, sig, family.gaits(), biped, sim=ENSEMBLE_SIM,
                                  diagnostics=False)
        zhat = biped.zeta(x0)
        for k, r in enumerate(records):
            zhat = d2 * zhat + (1.0 - d2) * zeta_stars[sig(k)]
            worst_replay = max(worst_replay, abs(r.zeta_minus - zhat) / zhat)
            over = max(lb - r.zeta_minus, r.zeta_minus - ub, 0.0)
            worst_overshoot = max(worst_overshoot, over)
    return worst_replay, worst_overshoot


class TestTheorem2:
    def test_bounded_under_arbitrary_switching(self, acceptance_family):
        family = acceptance_family["family"]
        rep = theorem2_check(family)
        seeds = list(range(100))
        n_steps = 1000
        t0 = time.time()
        chunks = [(str(acceptance_family["path"]), seeds[i::2], n_steps) for i in range(2)]
        with ProcessPoolExecutor(max_workers=2) as pool:
            results = list(pool.map(_ensemble_worker, chunks))
        worst_replay = max(r[0] for r in results)
        worst_overshoot = max(r[1] for r in results)
        tol = 1e-6 * rep.zeta_ub
        checks = {
            "domain_condition": rep.passed,
            "bounds": worst_overshoot <= tol,
            "replay": worst_replay < 1e-6,
        }
        record(
            "theorem-2",
            all(checks.values()),
            f"zeta_lb {rep.zeta_lb:.2f} >= K/delta2 {rep.k_max / rep.delta2:.2f} "
            f"(margin {rep.margin:.2f}); 100x{n_steps}-step signals: "
            f"bound overshoot {worst_overshoot:.2e} (tol {tol:.2e}), replay "
            f"mismatch {worst_replay:.2e} (<1e-6); {time.time() - t0:.0f} s"
            + ("" if all(checks.values()) else f"; failed: {checks}"),
        )


class TestProposition3:
    def test_dwell_bounds_sound(self, acceptance_graph):
        graph = acceptance_graph["graph"]
        feasible = [e for e in graph.edges if e.feasible and e.src != e.dst]
        violations = [e for e in feasible if e.measured_steps > e.dwell_bound]

        # Worked example: delta2 = 0.5, eps = 2, gap 6 gives N = 3, and the
        # affine iteration from the worst start confirms 3 steps reach the
        # ball while 2 do not.
        n = dwell_time_bound(106.0, 100.0, 0.5, 2.0)
        z = 100.0 + 6.0 + 2.0
        dists = []
        for _ in range(3):
            z = 0.5 * z + 0.5 * 100.0
            dists.append(abs(z - 100.0))
        example_ok = n == 3 and dists[1] >= 2.0 and dists[2] < 2.0

        ok = not violations and example_ok and len(feasible) > 0
        record(
            "proposition-3",
            ok,
            f"{len(feasible)} feasible edges all measured <= bound; worked "
            f"example N={n} with 3-step distance {dists[2]:.3f} < eps",
        )


class TestGraphPlanner:
    def test_planner_matches_brute_force(self):
        rng = np.random.default_rng(11)
        cases = 0
        for _ in range(100):
            n = int(rng.integers(3, 11))
            density = rng.uniform(0.15, 0.6)
            edges = [
                (i, j, int(rng.integers(1, 12)))
                for i, j in itertools.permutations(range(n), 2)
                if rng.random() < density
            ]
            g = graph_from_edges(n, edges)
            src, dst = (int(v) for v in rng.choice(n, 2, replace=False))
            ref = brute_force_shortest(g, src, dst)
            if np.isinf(ref):
                with pytest.raises(PlanningError):
                    plan_path(g, src, dst)
            else:
                _, cost = plan_path(g, src, dst)
                assert cost == ref
            cases += 1

        ring_ok, _ = strongly_connected(ring_graph(6))
        star_ok, star_comps = strongly_connected(
            graph_from_edges(5, [(0, i, 1) for i in range(1, 5)])
        )
        disc_ok, disc_comps = strongly_connected(
            graph_from_edges(4, [(0, 1, 1), (1, 0, 1), (2, 3, 1), (3, 2, 1)])
        )
        verdicts = ring_ok and not star_ok and len(star_comps) == 5 \
            and not disc_ok and len(disc_comps) == 2
        record(
            "graph-planner",
            cases == 100 and verdicts,
            f"{cases} random digraphs match brute force; SCC verdicts correct "
            f"on ring/star/disconnected fixtures",
        )

    def test_connectivity_reported(self, acceptance_graph):
        graph = acceptance_graph["graph"]
        connected, comps = strongly_connected(graph)
        feasible = sum(1 for e in graph.edges if e.feasible)
        # Parameter-dependent observation, logged rather than asserted.
        record(
            "graph-connectivity",
            True,
            f"{graph.n_nodes} nodes, {feasible}/{len(graph.edges)} feasible edges, "
            f"strongly connected: {connected} ({len(comps)} component(s)); "
            f"{acceptance_graph['elapsed']:.0f} s build",
        )


class TestScenario:
    def test_fast_slow_fast(self, acceptance_family, acceptance_graph, tmp_path):
        family = acceptance_family["family"]
        biped = acceptance_family["biped"]
        graph = acceptance_graph["graph"]

        hi = float(family.speeds.max())
        lo = float(family.speeds.min())
        node_hi = family.nearest_index(hi)
        node_lo = family.nearest_index(lo)
        _, down_bound = plan_path(graph, node_hi, node_lo)
        trigger_up = 3 + down_bound + 10

        t0 = time.time()
        run = supervise(
            SpeedSchedule([(0, hi), (3, lo), (trigger_up, hi)]),
            family, graph, biped, sim=EDGE_SIM, tail_steps=8,
        )
        elapsed = time.time() - t0
        write_speed_csv(tmp_path / "speed.csv", run.speed_rows)

        by_step = {r["step"]: r for r in run.speed_rows}
        v_before_up = by_step[trigger_up - 1]["speed"]
        v_final = run.speed_rows[-1]["speed"]
        down_switches = sum(
            1 for s in run.switch_log if family.speeds[s["to"]] < family.speeds[s["from"]]
        )
        up_switches = sum(
            1 for s in run.switch_log if family.speeds[s["to"]] > family.speeds[s["from"]]
        )
        violations = sum(len(s.monitor.violations) for s in run.steps)

        # Staircase: within each leg of a plan the per-stride speed moves
        # monotonically toward that leg's gait speed.
        staircase_ok = True
        for i, s in enumerate(run.switch_log):
            leg_end = run.switch_log[i + 1]["step"] if i + 1 < len(run.switch_log) else len(
                run.steps)
            target = family.speeds[s["to"]]
            vs = [by_step[k]["speed"] for k in range(s["step"], leg_end)]
            errs = [abs(v - target) for v in vs]
            if any(b > a + 1e-9 for a, b in zip(errs, errs[1:])):
                staircase_ok = False

        checks = {
            "slow_target": abs(v_before_up - lo) < 0.01,
            "fast_target": abs(v_final - hi) < 0.01,
            "no_violations": violations == 0 and not run.aborted,
            "asymmetry": down_switches >= up_switches,
            "staircase": staircase_ok,
            "runtime": elapsed < 300.0,
        }
        record(
            "scenario",
            all(checks.values()),
            f"{hi:.3f}->{lo:.3f}->{hi:.3f} m/s: reached {v_before_up:.4f} then "
            f"{v_final:.4f}; {down_switches} down vs {up_switches} up switches; "
            f"{violations} violations; {len(run.steps)} strides in {elapsed:.0f} s"
            + ("" if all(checks.values()) else f"; failed: {checks}"),
        )
