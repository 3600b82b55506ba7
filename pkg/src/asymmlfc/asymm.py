"""Asynchronous Method of Multipliers: node state machine and event loop.

Each awake node either takes one gradient step on its local augmented
Lagrangian and pushes its logic-AND column to its neighbours, or, once the
logic-AND matrix reports that every node passed its gradient test, performs
one multiplier ascent and broadcasts the new consensus multipliers.  Between
awakenings a node drains its mailbox.

``centralized_mm`` is the centralized Method of Multipliers with
block-coordinate primal steps on the same Lagrangian, used to validate the
distributed run.
"""

from __future__ import annotations

import csv
import io
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

import numpy as np

from . import lagrangian as lg
from .netgraph import Graph, Schedule

ASCENT = "ascent"


class UnknownSender(ValueError):
    pass


@dataclass
class AsymmParams:
    alpha: float = 1e-2
    gamma: float = 2.0
    beta: float = 0.5
    eps0: float = 1e-1
    eps_min: float = 1e-6
    penalty_cap: float = 1e6
    penalty0: float = 1.0
    # initial rho_ij and (varrho_s, zeta_s); both default to penalty0
    consensus_penalty0: Optional[float] = None
    shared_penalty0: Optional[float] = None

    def __post_init__(self):
        if self.consensus_penalty0 is None:
            self.consensus_penalty0 = self.penalty0
        if self.shared_penalty0 is None:
            self.shared_penalty0 = self.penalty0
        for name in ("alpha", "gamma", "beta", "eps0", "eps_min", "penalty_cap", "penalty0",
                     "consensus_penalty0", "shared_penalty0"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.gamma < 1:
            raise ValueError("gamma must be >= 1 so penalties never decrease")


@dataclass(frozen=True)
class WeightCast:
    sender: int
    ws: np.ndarray
    s_col: np.ndarray


@dataclass(frozen=True)
class MultiplierCast:
    sender: int
    nu: np.ndarray
    rho: float


@dataclass
class NodeState:
    node: int
    neighbors: tuple
    w: np.ndarray
    ws: np.ndarray
    neighbor_ws: dict
    multipliers: lg.MultiplierSet
    penalties: lg.PenaltySet
    neighbor_nu_rho: dict  # j -> (nu_ji, rho_ji), last received
    S: np.ndarray
    eps: float
    alpha: float
    m_done: bool = False
    received_nu_from: set = field(default_factory=set)
    phase: int = 0
    cache: object = None  # NodeEval at the current (w, ws)

    @property
    def own_col(self) -> int:
        return self.S.shape[1] - 1

    def column_of(self, j: int) -> int:
        return self.neighbors.index(j)

    def evaluation(self, problem):
        if self.cache is None:
            self.cache = problem.evaluate(self.w, self.ws)
        return self.cache


def init_states(graph: Graph, problems, params: AsymmParams, w0, ws0) -> list:
    """Fresh node states; ``w0``/``ws0`` hold every node's starting parameters.

    Nodes start knowing their neighbours' initial shared copies and the
    initial (zero) multipliers and penalties on every edge.
    """
    states = []
    for i, prob in enumerate(problems):
        nbrs = graph.neighbors(i)
        states.append(NodeState(
            node=i,
            neighbors=nbrs,
            w=np.array(w0[i], dtype=float),
            ws=np.array(ws0[i], dtype=float),
            neighbor_ws={j: np.array(ws0[j], dtype=float) for j in nbrs},
            multipliers=lg.MultiplierSet.zeros(nbrs, prob.n_shared, prob.sizes),
            penalties=lg.PenaltySet.constant(nbrs, params.penalty0, params.consensus_penalty0,
                                             params.shared_penalty0),
            neighbor_nu_rho={j: (np.zeros(prob.n_shared), params.consensus_penalty0) for j in nbrs},
            S=np.zeros((graph.diameter, len(nbrs) + 1), dtype=np.int8),
            eps=params.eps0,
            alpha=params.alpha,
        ))
    return states


@dataclass
class AwakeResult:
    messages: list  # (recipient, message)
    grad_norm: float = math.nan
    passed: Optional[bool] = None
    stepped: bool = False
    ascended: bool = False


def ascend(state: NodeState, problem, params: AsymmParams) -> None:
    """Dual ascent on every multiplier owned by the node, then grow penalties."""
    ev = state.evaluation(problem)
    m, p = state.multipliers, state.penalties
    m.nu = {j: m.nu[j] + p.rho[j] * (state.ws - state.neighbor_ws[j]) for j in state.neighbors}
    m.lam = m.lam + p.varrho * ev.values["eq"]
    m.lam_s = m.lam_s + p.varrho_s * ev.values["shared_eq"]
    m.mu = np.maximum(0.0, m.mu + p.zeta * ev.values["ineq"])
    m.mu_s = np.maximum(0.0, m.mu_s + p.zeta_s * ev.values["shared_ineq"])
    state.penalties = p.grown(params.gamma, params.penalty_cap)


def on_awake(state: NodeState, problem, params: AsymmParams, force_test: Optional[bool] = None) -> AwakeResult:
    """Awake branch; updates ``state`` in place and returns outgoing messages.

    ``force_test`` overrides the gradient-norm test outcome (used to script
    the convergence-detection protocol).
    """
    res = AwakeResult([])
    S, own = state.S, state.own_col
    if not S[-1].all() and not state.m_done:
        ev = state.evaluation(problem)
        gw, gws = lg.local_lagrangian_grad(problem, state, ev)
        res.grad_norm = math.sqrt(float(gw @ gw) + float(gws @ gws))
        state.w = state.w - state.alpha * gw
        state.ws = state.ws - state.alpha * gws
        state.cache = None
        res.stepped = True
        res.passed = res.grad_norm <= state.eps if force_test is None else bool(force_test)
        if res.passed:
            S[0, own] = 1
        for l in range(1, S.shape[0]):
            S[l, own] = S[l - 1].all()
        col = S[:, own].copy()
        res.messages += [(j, WeightCast(state.node, state.ws.copy(), col.copy())) for j in state.neighbors]
    if S[-1].all() and not state.m_done:
        ascend(state, problem, params)
        state.m_done = True
        state.phase += 1
        res.ascended = True
        res.messages += [
            (j, MultiplierCast(state.node, state.multipliers.nu[j].copy(), state.penalties.rho[j]))
            for j in state.neighbors
        ]
    return res


def check_phase_reset(state: NodeState, params: AsymmParams) -> bool:
    """Start a new minimization phase once every neighbour's multipliers arrived."""
    if state.m_done and state.received_nu_from.issuperset(state.neighbors):
        state.m_done = False
        state.S[:] = 0
        state.eps = max(params.eps_min, params.beta * state.eps)
        state.received_nu_from.clear()
        return True
    return False


def on_idle_receive(state: NodeState, msg, params: AsymmParams) -> NodeState:
    j = msg.sender
    if j not in state.neighbors:
        raise UnknownSender(f"node {state.node} got a message from non-neighbour {j}")
    if isinstance(msg, WeightCast):
        state.neighbor_ws[j] = msg.ws
        if j not in state.received_nu_from:
            state.S[:, state.column_of(j)] = msg.s_col
    elif isinstance(msg, MultiplierCast):
        state.neighbor_nu_rho[j] = (msg.nu, msg.rho)
        state.received_nu_from.add(j)
        state.S[-1, :] = 1
    else:
        raise TypeError(f"unknown message {msg!r}")
    check_phase_reset(state, params)
    return state


# --- diagnostics ---------------------------------------------------------------

TRACE_COLUMNS = (
    "event_index", "node", "grad_norm", "avg_eq_violation", "avg_ineq_violation",
    "consensus_disagreement", "lagrangian_value", "phase_count",
)


@dataclass
class EventRecord:
    event_index: int
    node: int
    grad_norm: float
    avg_eq_violation: float
    avg_ineq_violation: float
    consensus_disagreement: float
    lagrangian_value: float
    phase_count: int  # phase of the awake node before the event
    action: str = "wait"
    passed: Optional[bool] = None
    avg_violation: float = math.nan


@dataclass
class RunTrace:
    records: list = field(default_factory=list)
    states: list = field(default_factory=list)
    schedule: list = field(default_factory=list)
    iterates: list = field(default_factory=list)  # (node, w copy, ws copy) per primal step
    phase_violations: list = field(default_factory=list)  # (phase, event, avg_violation)
    initial: Optional[EventRecord] = None

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(TRACE_COLUMNS)
        for r in self.records:
            wr.writerow([_fmt(getattr(r, c)) for c in TRACE_COLUMNS])
        return buf.getvalue()

    def violations_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(("event_index", "avg_violation", "min_phase"))
        rows = ([self.initial] if self.initial else []) + self.records
        for r in rows:
            wr.writerow([r.event_index, _fmt(r.avg_violation), r.phase_count])
        return buf.getvalue()

    def node_iterates(self, node: int, which: str = "ws") -> list:
        k = 1 if which == "w" else 2
        return [it[k] for it in self.iterates if it[0] == node]


def _fmt(x):
    if isinstance(x, float):
        return repr(x)
    return x


def _node_contribution(prob, st) -> tuple:
    ev = st.evaluation(prob)
    eq = np.concatenate([np.abs(ev.values["eq"]), np.abs(ev.values["shared_eq"])])
    ineq = np.concatenate([np.maximum(0.0, ev.values["ineq"]),
                           np.maximum(0.0, ev.values["shared_ineq"])])
    lag = ev.objective + lg._constraint_terms(ev, st.multipliers, st.penalties)
    return float(eq.sum()), eq.size, float(ineq.sum()), ineq.size, lag


class NetworkMonitor:
    """Network-wide constraint violation, consensus gap and Lagrangian value.

    Per-node pieces are cached and refreshed only for nodes marked dirty.
    """

    def __init__(self, problems, states, graph: Graph):
        self.problems, self.states, self.graph = problems, states, graph
        self.parts = [_node_contribution(p, s) for p, s in zip(problems, states)]

    def refresh(self, i: int) -> None:
        self.parts[i] = _node_contribution(self.problems[i], self.states[i])

    def snapshot(self) -> dict:
        states = self.states
        eq_sum = sum(p[0] for p in self.parts)
        eq_n = sum(p[1] for p in self.parts)
        in_sum = sum(p[2] for p in self.parts)
        in_n = sum(p[3] for p in self.parts)
        lag = sum(p[4] for p in self.parts)
        for st in states:
            for j in st.neighbors:
                lag += lg.v(st.penalties.rho[j], st.multipliers.nu[j], st.ws - states[j].ws)
        # np.max rather than builtin max so that a NaN gap is not swallowed
        gaps = [np.max(np.abs(states[i].ws - states[j].ws))
                for i, j in sorted(self.graph.edges) if states[i].ws.size]
        gap = float(np.max(gaps)) if gaps else 0.0
        return {
            "avg_eq_violation": eq_sum / eq_n if eq_n else 0.0,
            "avg_ineq_violation": in_sum / in_n if in_n else 0.0,
            "avg_violation": (eq_sum + in_sum) / (eq_n + in_n) if eq_n + in_n else 0.0,
            "consensus_disagreement": gap,
            "lagrangian_value": float(lag),
        }


def network_diagnostics(problems, states, graph: Graph) -> dict:
    """Constraint violation, consensus disagreement and Lagrangian of the network."""
    return NetworkMonitor(problems, states, graph).snapshot()


# --- event loop ------------------------------------------------------------

def run(
    graph: Graph,
    problems,
    schedule: Schedule,
    iterations: int,
    params: AsymmParams,
    states: list,
    hooks: Iterable[Callable] = (),
    test_script: Optional[Callable[[int, int], Optional[bool]]] = None,
    record_iterates: bool = False,
    diagnostics: bool = True,
) -> RunTrace:
    """Run ``iterations`` awakenings; ``states`` are updated in place.

    Messages are delivered to the recipient's mailbox immediately and handled
    right before the recipient's next awakening.  ``hooks`` are called as
    ``hook(record, states)`` after every event.
    """
    mailboxes = [deque() for _ in range(graph.node_count)]
    trace = RunTrace(states=states)
    monitor = NetworkMonitor(problems, states, graph) if diagnostics else None
    diag = monitor.snapshot if diagnostics else (lambda: {})
    d0 = diag()
    trace.initial = EventRecord(-1, -1, math.nan, d0.get("avg_eq_violation", math.nan),
                                d0.get("avg_ineq_violation", math.nan),
                                d0.get("consensus_disagreement", math.nan),
                                d0.get("lagrangian_value", math.nan), 0, "init",
                                avg_violation=d0.get("avg_violation", math.nan))
    min_phase = min(st.phase for st in states)
    for t in range(iterations):
        i = schedule.next_awakening()
        trace.schedule.append(i)
        st = states[i]
        while mailboxes[i]:
            on_idle_receive(st, mailboxes[i].popleft(), params)
        check_phase_reset(st, params)
        phase_before = st.phase
        forced = test_script(t, i) if test_script is not None else None
        res = on_awake(st, problems[i], params, force_test=forced)
        for to, msg in res.messages:
            mailboxes[to].append(msg)
        if res.stepped:
            st.evaluation(problems[i])
            if record_iterates:
                trace.iterates.append((i, st.w.copy(), st.ws.copy()))
        if monitor is not None and (res.stepped or res.ascended):
            monitor.refresh(i)
        action = ("step+ascent" if res.ascended else "step") if res.stepped else (
            "ascent" if res.ascended else "wait")
        d = diag()
        rec = EventRecord(
            t, i, res.grad_norm,
            d.get("avg_eq_violation", math.nan), d.get("avg_ineq_violation", math.nan),
            d.get("consensus_disagreement", math.nan), d.get("lagrangian_value", math.nan),
            phase_before, action, res.passed, d.get("avg_violation", math.nan),
        )
        trace.records.append(rec)
        if res.ascended:
            new_min = min(s.phase for s in states)
            if new_min > min_phase:
                min_phase = new_min
                trace.phase_violations.append((min_phase, t, rec.avg_violation))
        for h in hooks:
            h(rec, states)
    return trace


# --- centralized counterpart ---------------------------------------------------

def mirror_schedule(trace: RunTrace, node_count: int) -> list:
    """Block schedule that replays an ASYMM run as centralized MM.

    Every awakening sees its neighbours' latest parameters and multipliers
    (mailboxes are drained first), so the replay is the event sequence
    itself: ``i`` for a primal step of node ``i`` and ``(ASCENT, i)`` for
    node ``i``'s multiplier ascent, in event order.  Nodes detect
    convergence at different events, which is why ascents are per node.
    """
    out = []
    for r in trace.records:
        if r.action.startswith("step"):
            out.append(r.node)
        if r.action.endswith("ascent"):
            out.append((ASCENT, r.node))
    return out


@dataclass
class CentralTrace:
    states: list
    iterates: list = field(default_factory=list)  # (node, w, ws)
    ascents: list = field(default_factory=list)  # schedule positions of ascents
    all_tests_passed: list = field(default_factory=list)  # per ascent, mirrored mode
    phase_violations: list = field(default_factory=list)

    def node_iterates(self, node: int, which: str = "ws") -> list:
        k = 1 if which == "w" else 2
        return [it[k] for it in self.iterates if it[0] == node]


def centralized_mm(
    problems,
    graph: Graph,
    block_schedule: Iterable,
    params: AsymmParams,
    w0,
    ws0,
    iterations: Optional[int] = None,
    record_iterates: bool = True,
    auto_ascent: Optional[bool] = None,
) -> CentralTrace:
    """Method of Multipliers with block-coordinate gradient primal steps.

    Schedule entries are a node index (one gradient step on that node's
    block of the network Lagrangian), ``(ASCENT, i)`` (ascent of node ``i``'s
    multipliers only) or :data:`ASCENT` (every node ascends).  A schedule
    without any ascent entries ascends all nodes as soon as every block
    passed its gradient test in the current phase.  ``auto_ascent`` forces
    that choice; replays of a distributed run pass ``False``, since a short
    run may contain no ascent at all.  Updates, penalty growth
    and tolerance shrinking are the same as in the distributed algorithm.
    """
    states = init_states(graph, problems, params, w0, ws0)
    schedule = list(block_schedule) if iterations is None else block_schedule
    if auto_ascent is None:
        auto_ascent = not (iterations is None and any(
            e == ASCENT or (isinstance(e, tuple) and e[0] == ASCENT) for e in schedule))
    passed = [False] * len(problems)
    out = CentralTrace(states)
    completed = [0]

    def ascend_nodes(nodes, pos):
        # ascent against the current global iterate
        for i in nodes:
            st = states[i]
            st.neighbor_ws = {j: states[j].ws for j in st.neighbors}
            ascend(st, problems[i], params)
            st.eps = max(params.eps_min, params.beta * st.eps)
            st.phase += 1
            passed[i] = False
        for st in states:
            st.neighbor_nu_rho = {
                j: (states[j].multipliers.nu[st.node], states[j].penalties.rho[st.node])
                for j in st.neighbors
            }
        low = min(st.phase for st in states)
        if low > completed[0]:
            completed[0] = low
            out.ascents.append(pos)
            viol = network_diagnostics(problems, states, graph)["avg_violation"]
            out.phase_violations.append((low, pos, viol))

    all_nodes = range(len(problems))
    for pos, entry in enumerate(schedule):
        if iterations is not None and pos >= iterations:
            break
        if entry == ASCENT:
            out.all_tests_passed.append(all(passed))
            ascend_nodes(all_nodes, pos)
            continue
        if isinstance(entry, tuple):
            ascend_nodes([int(entry[1])], pos)
            continue
        i = int(entry)
        st = states[i]
        ev = st.evaluation(problems[i])
        gw, gws = lg.global_block_grad(problems, states, i, ev)
        norm = math.sqrt(float(gw @ gw) + float(gws @ gws))
        st.w = st.w - st.alpha * gw
        st.ws = st.ws - st.alpha * gws
        st.cache = None
        passed[i] = passed[i] or norm <= st.eps
        if record_iterates:
            out.iterates.append((i, st.w.copy(), st.ws.copy()))
        if auto_ascent and all(passed):
            out.all_tests_passed.append(True)
            ascend_nodes(all_nodes, pos)
    return out


def cyclic_schedule(node_count: int):
    """Endless round-robin block order."""
    while True:
        yield from range(node_count)


def max_iterate_difference(asymm_trace: RunTrace, central: CentralTrace, node_count: int):
    """Largest absolute gap between matching per-node iterates (NaN if either
    run produced NaNs).

    Returns ``None`` when the two runs took different numbers of steps on
    some node, i.e. the schedules do not mirror each other.
    """
    gaps = [0.0]
    for i in range(node_count):
        for which in ("ws", "w"):
            a = asymm_trace.node_iterates(i, which)
            c = central.node_iterates(i, which)
            if len(a) != len(c):
                return None
            gaps += [np.max(np.abs(x - y)) for x, y in zip(a, c) if x.size]
    return float(np.max(gaps))
