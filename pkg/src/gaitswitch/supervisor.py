"""Speed-change supervisor.

Executes a speed schedule by planning over the switch graph and walking the
plan one gait at a time: the controller of the next node on the path is
engaged and held until the momentum coordinate enters the epsilon-ball of
that node's fixed point, and only then does the plan advance.  Because an
onward switch is never issued early, every leg's realized step count is
covered by the analytic dwell-time bound that weights the graph.

New schedule targets are adopted at settled instants (no plan in transit),
which keeps every leg's convergence guarantee intact even when a trigger
fires mid-transit.
"""

from __future__ import annotations

from dataclasses import dataclass

from .control import ControllerConfig
from .design import GaitFamily
from .graph import PlanningError, SwitchGraph, plan_path
from .model import Biped, GaitswitchError
from .sim import SimConfig, poincare_step, section_state


class SupervisorAbort(GaitswitchError):
    """A modeling constraint was violated during execution."""

    def __init__(self, step_index: int, kind: str, value: float):
        self.step_index = step_index
        self.kind = kind
        self.value = value
        super().__init__(f"constraint violation at step {step_index}: {kind} = {value:.3f}")


@dataclass(frozen=True)
class ScheduleEntry:
    trigger_step: int
    speed: float


@dataclass
class SpeedSchedule:
    """Ordered speed targets, each activated at its trigger step.  The
    first entry (trigger 0) selects the starting gait."""

    entries: list

    def __post_init__(self):
        self.entries = [
            e if isinstance(e, ScheduleEntry) else ScheduleEntry(int(e[0]), float(e[1]))
            for e in self.entries
        ]
        if not self.entries:
            raise ValueError("schedule needs at least one entry")
        triggers = [e.trigger_step for e in self.entries]
        if any(b <= a for a, b in zip(triggers, triggers[1:])):
            raise ValueError("trigger steps must be strictly increasing")
        if triggers[0] != 0:
            raise ValueError("the first entry must trigger at step 0 (initial gait)")

    def desired_speed(self, k: int) -> float:
        v = self.entries[0].speed
        for e in self.entries:
            if e.trigger_step <= k:
                v = e.speed
        return v

    def validate_speeds(self, family: GaitFamily):
        lo, hi = family.speeds.min(), family.speeds.max()
        for e in self.entries:
            if not lo - 1e-9 <= e.speed <= hi + 1e-9:
                raise ValueError(
                    f"scheduled speed {e.speed} outside the certified range "
                    f"[{lo:.3f}, {hi:.3f}]"
                )

    @classmethod
    def from_dicts(cls, rows) -> "SpeedSchedule":
        return cls([ScheduleEntry(int(r["step"]), float(r["speed"])) for r in rows])


@dataclass
class SupervisorRun:
    """Execution record: strides, switching decisions and convergence."""

    steps: list                  # StepResult per stride
    gait_indices: list           # active node per stride
    speed_rows: list             # dicts for the speed CSV
    switch_log: list             # dicts: step, from, to, zeta, edge bound
    leg_dwells: list             # dicts: from, to, realized steps, bound
    entry_results: list          # dicts: entry, target node, converged step, speed
    plans: list                  # dicts: entry, node path, total bound
    aborted: bool = False


def supervise(
    schedule: SpeedSchedule,
    family: GaitFamily,
    graph: SwitchGraph,
    biped: Biped,
    ctrl: ControllerConfig | None = None,
    sim: SimConfig | None = None,
    tail_steps: int = 10,
    max_steps: int = 5000,
) -> SupervisorRun:
    schedule.validate_speeds(family)
    eps = graph.epsilon
    run = SupervisorRun([], [], [], [], [], [], [])

    start_node = family.nearest_index(schedule.entries[0].speed)
    run.plans.append({"entry": 0, "path": [start_node], "total_bound": 0})
    run.entry_results.append(
        {"entry": 0, "target_node": start_node, "converged_step": 0,
         "speed": float(family.records[start_node].speed)}
    )

    cur = start_node          # last node whose ball the state entered
    active = start_node       # node whose controller is applied
    plan: list = []           # node path in transit, plan[0] == cur at adoption
    hop = 0
    leg_start = 0
    next_entry = 1

    x = section_state(family.gait(start_node), biped, family.records[start_node].zeta_star)
    t = 0.0
    k = 0
    tail = 0

    def engage(step_index: int, frm: int, to: int, zeta: float):
        edge = graph.edge(frm, to)
        run.switch_log.append(
            {"step": step_index, "from": frm, "to": to, "zeta": zeta,
             "edge_bound": edge.dwell_bound if edge else None}
        )

    while k < max_steps:
        if next_entry < len(schedule.entries) and not plan \
                and schedule.entries[next_entry].trigger_step <= k:
            entry = schedule.entries[next_entry]
            target = family.nearest_index(entry.speed)
            path, total = plan_path(graph, cur, target)
            run.plans.append({"entry": next_entry, "path": list(path),
                              "total_bound": int(total)})
            next_entry += 1
            if len(path) > 1:
                plan = path
                hop = 1
                active = plan[hop]
                engage(k, cur, active, biped.zeta(x))
                leg_start = k
            else:
                run.entry_results.append(
                    {"entry": next_entry - 1, "target_node": target,
                     "converged_step": k, "speed": float(family.records[target].speed)}
                )

        if next_entry >= len(schedule.entries) and not plan:
            tail += 1
            if tail > tail_steps:
                break

        step = poincare_step(x, family.gait(active), biped, ctrl, sim, diagnostics=True)
        if not step.monitor.clean:
            run.aborted = True
            _, kind, value = step.monitor.violations[0]
            raise SupervisorAbort(k, kind, float(value))
        x = step.x_minus
        zeta = biped.zeta(x)
        run.steps.append(step)
        run.gait_indices.append(active)
        run.speed_rows.append(
            {"step": k, "t_start": t, "t_end": t + step.duration,
             "speed": step.avg_speed, "v_des": schedule.desired_speed(k),
             "gait": active, "zeta": zeta}
        )
        t += step.duration
        k += 1

        if plan and abs(zeta - graph.zeta_stars[active]) < eps:
            edge = graph.edge(cur, active)
            run.leg_dwells.append(
                {"from": cur, "to": active, "realized": k - leg_start,
                 "bound": edge.dwell_bound if edge else None}
            )
            cur = active
            if hop == len(plan) - 1:
                run.entry_results.append(
                    {"entry": next_entry - 1, "target_node": cur,
                     "converged_step": k, "speed": float(family.records[cur].speed)}
                )
                plan = []
                hop = 0
            else:
                hop += 1
                active = plan[hop]
                engage(k, cur, active, zeta)
                leg_start = k

    if plan or next_entry < len(schedule.entries):
        raise PlanningError(f"schedule incomplete after {max_steps} steps")
    return run
