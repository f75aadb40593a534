"""Switch feasibility graph over the gait family.

A switch p -> q is admitted only after a full-order simulation that starts
on gait p's periodic orbit, applies gait q's controller, and reaches the
epsilon-ball of q's momentum fixed point with every actuation and contact
monitor clean.  Edges are weighted a priori by the analytic dwell-time
bound of the contracting momentum map, so a shortest path is a plan whose
cost is a guaranteed number of steps.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .control import ControllerConfig
from .design import GaitFamily
from .model import Biped, GaitswitchError
from .sim import IntegrationError, SimConfig, poincare_step, section_state


class PlanningError(GaitswitchError):
    pass


@dataclass
class Theorem2Report:
    """Family-wide boundedness check for arbitrary switching: every fixed
    point must lie inside the common domain of all the reduced maps."""

    zeta_lb: float
    zeta_ub: float
    k_max: float
    delta2: float
    passed: bool
    margin: float
    offending: list

    def to_dict(self) -> dict:
        return asdict(self)


def theorem2_check(family: GaitFamily) -> Theorem2Report:
    zeta_lb = family.zeta_lb
    zeta_ub = family.zeta_ub
    k_max = family.k_max
    delta2 = family.delta2
    bound = k_max / delta2
    offending = [r.index for r in family.records if r.zeta_star < bound]
    return Theorem2Report(
        zeta_lb=float(zeta_lb),
        zeta_ub=float(zeta_ub),
        k_max=float(k_max),
        delta2=float(delta2),
        passed=zeta_lb >= bound,
        margin=float(zeta_lb - bound),
        offending=offending,
    )


def dwell_time_bound(zeta_p: float, zeta_q: float, delta2: float, epsilon: float) -> int:
    """Smallest integer step count that guarantees arrival in the
    epsilon-ball of the destination momentum fixed point:

        N > 0.5 * log(|zeta_p - zeta_q|/eps + 1) / log(1/delta_z).
    """
    if epsilon <= 0.0:
        raise ValueError("epsilon must be positive")
    if not 0.0 < delta2 < 1.0:
        raise ValueError("contraction factor must lie in (0, 1)")
    gap = abs(zeta_p - zeta_q)
    rhs = 0.5 * math.log(gap / epsilon + 1.0) / math.log(1.0 / math.sqrt(delta2))
    return int(math.floor(rhs)) + 1


@dataclass
class SwitchEdge:
    src: int
    dst: int
    feasible: bool
    dwell_bound: int
    measured_steps: int
    torque_max: float
    normal_force_min: float
    friction_ratio_max: float
    reason: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def feasibility_sim(
    p: int,
    q: int,
    family: GaitFamily,
    biped: Biped,
    epsilon: float,
    ctrl: ControllerConfig | None = None,
    sim: SimConfig | None = None,
) -> SwitchEdge:
    """Simulate the switch p -> q from p's fixed point under q's controller
    until the momentum enters the epsilon-ball of q's fixed point.

    The edge is feasible only if every integrator sample along the
    transient respects the torque, friction and normal-force limits.  The
    step cap is twice the analytic dwell bound plus ten.
    """
    rec_p = family.records[p]
    rec_q = family.records[q]
    bound = dwell_time_bound(rec_p.zeta_star, rec_q.zeta_star, family.delta2, epsilon)

    if p == q:
        return SwitchEdge(p, q, True, bound, 0, rec_p.torque_max,
                          rec_p.normal_force_min, rec_p.friction_ratio_max)

    gait_q = family.gait(q)
    x = section_state(family.base.with_beta(rec_p.beta), biped, rec_p.zeta_star)
    limits = biped.params
    tq_max, fn_min, fr_max = 0.0, np.inf, 0.0
    cap = 2 * bound + 10
    for k in range(1, cap + 1):
        try:
            step = poincare_step(x, gait_q, biped, ctrl, sim, diagnostics=True)
        except IntegrationError as exc:
            return SwitchEdge(p, q, False, bound, k, tq_max, fn_min, fr_max,
                              reason=f"simulation failed: {exc}")
        tq_max = max(tq_max, float(np.abs(step.torques).max()))
        fn_min = min(fn_min, float(step.f_normal.min()))
        fr_max = max(fr_max, float((np.abs(step.f_tangential) / step.f_normal).max()))
        if not step.monitor.clean:
            kind = step.monitor.violations[0][1]
            return SwitchEdge(p, q, False, bound, k, tq_max, fn_min, fr_max,
                              reason=f"{kind} violation during transient")
        x = step.x_minus
        if abs(biped.zeta(x) - rec_q.zeta_star) < epsilon:
            return SwitchEdge(p, q, True, bound, k, tq_max, fn_min, fr_max)
    return SwitchEdge(p, q, False, bound, cap, tq_max, fn_min, fr_max,
                      reason="step cap exceeded before reaching the ball")


@dataclass
class SwitchGraph:
    """Directed graph over gait indices with dwell-time-weighted edges."""

    speeds: np.ndarray
    zeta_stars: np.ndarray
    delta2: float
    epsilon: float
    edges: list = field(default_factory=list)

    def __post_init__(self):
        self.speeds = np.asarray(self.speeds, dtype=float)
        self.zeta_stars = np.asarray(self.zeta_stars, dtype=float)

    @property
    def n_nodes(self) -> int:
        return len(self.speeds)

    def feasible_adjacency(self) -> list:
        adj = [[] for _ in range(self.n_nodes)]
        for e in self.edges:
            if e.feasible and e.src != e.dst:
                adj[e.src].append((e.dst, e.dwell_bound))
        return adj

    def edge(self, p: int, q: int) -> SwitchEdge | None:
        for e in self.edges:
            if e.src == p and e.dst == q:
                return e
        return None

    def to_dict(self) -> dict:
        return {
            "speeds": self.speeds.tolist(),
            "zeta_stars": self.zeta_stars.tolist(),
            "delta2": self.delta2,
            "epsilon": self.epsilon,
            "edges": [e.to_dict() for e in self.edges],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SwitchGraph":
        return cls(
            speeds=np.asarray(d["speeds"], dtype=float),
            zeta_stars=np.asarray(d["zeta_stars"], dtype=float),
            delta2=float(d["delta2"]),
            epsilon=float(d["epsilon"]),
            edges=[SwitchEdge(**e) for e in d["edges"]],
        )


def build_graph(
    family: GaitFamily,
    biped: Biped,
    epsilon: float = 2.0,
    ctrl: ControllerConfig | None = None,
    sim: SimConfig | None = None,
    include_self: bool = False,
    progress=None,
) -> SwitchGraph:
    """Feasibility-simulate every ordered pair of the family."""
    report = theorem2_check(family)
    if not report.passed:
        raise PlanningError(
            f"family fails the common-domain condition by {-report.margin:.3f}; "
            f"offending gaits {report.offending}"
        )
    n = len(family)
    graph = SwitchGraph(
        speeds=family.speeds,
        zeta_stars=np.array([r.zeta_star for r in family.records]),
        delta2=family.delta2,
        epsilon=epsilon,
    )
    for p in range(n):
        for q in range(n):
            if p == q and not include_self:
                continue
            graph.edges.append(feasibility_sim(p, q, family, biped, epsilon, ctrl, sim))
            if progress is not None:
                progress(p, q)
    return graph


def strongly_connected(graph: SwitchGraph):
    """Tarjan strongly-connected components over the feasible edges.

    Returns (is_strongly_connected, components) with components as lists of
    node indices.
    """
    n = graph.n_nodes
    adj = graph.feasible_adjacency()
    index = [-1] * n
    low = [0] * n
    on_stack = [False] * n
    stack: list[int] = []
    components: list[list[int]] = []
    counter = [0]

    for root in range(n):
        if index[root] != -1:
            continue
        # Iterative Tarjan: (node, neighbor iterator position).
        work = [(root, 0)]
        while work:
            v, pi = work[-1]
            if pi == 0:
                index[v] = low[v] = counter[0]
                counter[0] += 1
                stack.append(v)
                on_stack[v] = True
            advanced = False
            for j in range(pi, len(adj[v])):
                w = adj[v][j][0]
                if index[w] == -1:
                    work[-1] = (v, j + 1)
                    work.append((w, 0))
                    advanced = True
                    break
                if on_stack[w]:
                    low[v] = min(low[v], index[w])
            if advanced:
                continue
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp.append(w)
                    if w == v:
                        break
                components.append(sorted(comp))
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])
    return len(components) == 1 and n > 0, components


def plan_path(graph: SwitchGraph, src: int, dst: int):
    """Dijkstra over dwell-time weights; equal-cost ties resolve toward the
    lower predecessor index so plans are deterministic.

    Returns (node sequence, total dwell steps).
    """
    n = graph.n_nodes
    if not 0 <= src < n and 0 <= dst < n:
        raise PlanningError("source or destination outside the graph")
    if src == dst:
        return [src], 0
    adj = graph.feasible_adjacency()
    dist = [math.inf] * n
    pred = [-1] * n
    dist[src] = 0
    heap = [(0, src)]
    visited = [False] * n
    while heap:
        d, u = heapq.heappop(heap)
        if visited[u]:
            continue
        visited[u] = True
        if u == dst:
            break
        for v, w in sorted(adj[u]):
            nd = d + w
            if nd < dist[v] or (nd == dist[v] and pred[v] > u):
                dist[v] = nd
                pred[v] = u
                heapq.heappush(heap, (nd, v))
    if math.isinf(dist[dst]):
        _, comps = strongly_connected(graph)
        holder = next(c for c in comps if src in c)
        raise PlanningError(
            f"gait {dst} unreachable from {src}; source component {holder}"
        )
    path = [dst]
    while path[-1] != src:
        path.append(pred[path[-1]])
    path.reverse()
    return path, int(dist[dst])
