"""Asynchronous cascade between the power and cyber layers.

One outer iteration runs four phases:

* A - failures spread inside the power layer until a fixpoint (islanding,
  load shedding, overload tripping);
* B - power buses lost since the previous phase A take their cyber twins down;
* C - the cyber layer keeps only its giant component;
* D - cyber nodes lost since the previous phase C take their power buses down.

The loop stops when phase B has nothing to hand over or phase D has nothing
to hand back. Failures only ever cross layers at the B and D boundaries.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .cyber import giant_component_prune
from .islands import components, extract_islands, remove_overloaded_branches, shed_and_solve
from .network import normalize_ratings
from .powerflow import SolverOptions

log = logging.getLogger(__name__)


@dataclass
class PhaseSnapshot:
    """Service state of both layers right after one phase.

    ``bus_island``/``node_component`` hold an island id per bus/cyber node
    (``-1`` = failed). Island ids number the live components by their
    smallest member.
    """

    iteration: int
    phase: str
    bus_island: np.ndarray
    branch_in_service: np.ndarray
    island_served_mw: list
    served_load_mw: float
    node_component: np.ndarray | None = None
    edge_in_service: np.ndarray | None = None

    def to_dict(self, power, cyber=None):
        ids = power.bus_id
        doc = {
            "iteration": self.iteration,
            "phase": self.phase,
            "served_load_mw": self.served_load_mw,
            "power": {
                "layer": "power",
                "buses": [{"id": int(ids[i]), "island": _island_or_failed(self.bus_island[i])}
                          for i in range(len(ids))],
                "branches": [{"id": k, "from": int(ids[power.br_from[k]]), "to": int(ids[power.br_to[k]]),
                              "in_service": bool(self.branch_in_service[k])}
                             for k in range(power.n_branch)],
                "islands": [{"id": i, "served_load_mw": mw} for i, mw in enumerate(self.island_served_mw)],
            },
        }
        if self.node_component is not None:
            doc["cyber"] = {
                "layer": "cyber",
                "nodes": [{"id": c, "power_bus": int(ids[cyber.bus_of[c]]) if cyber.bus_of[c] >= 0 else None,
                           "island": _island_or_failed(self.node_component[c])}
                          for c in range(len(self.node_component))],
                "edges": [{"u": int(u), "v": int(v), "in_service": bool(live)}
                          for (u, v), live in zip(cyber.edges, self.edge_in_service)],
            }
        return doc


def _island_or_failed(label):
    return "failed" if label < 0 else int(label)


@dataclass
class CascadeState:
    """Working state of one cascade run.

    The ``failed_*`` sets hold the components lost since the previous phase
    of the same kind (positions for power buses/branches, node ids and edge
    indices for the cyber layer); ``n0``, ``m0`` and ``l0`` (p.u.) are the
    live bus count, branch count and active load when the run started.
    """

    power: object
    cyber: object = None
    options: SolverOptions = field(default_factory=SolverOptions)
    record: bool = True
    failed_power_buses: set = field(default_factory=set)
    failed_power_branches: set = field(default_factory=set)
    failed_cyber_nodes: set = field(default_factory=set)
    failed_cyber_edges: set = field(default_factory=set)
    stopped: bool = False
    abnormal: bool = False
    iteration: int = 0
    phase_log: list = field(default_factory=list)
    overload_trips: list = field(default_factory=list)  # (iteration, branch id)

    def __post_init__(self):
        self.n0 = self.power.n_live_buses
        self.m0 = self.power.n_live_branches
        self.l0 = self.power.total_load()
        self._bus_mark = self.power.bus_in_service.copy()
        self._branch_mark = self.power.branch_live.copy()
        if self.cyber is not None:
            self._node_mark = self.cyber.node_in_service.copy()
            self._edge_mark = self.cyber.edge_in_service.copy()

    def snapshot(self, phase):
        if not self.record:
            return
        net = self.power
        bus_island = np.full(net.n_bus, -1, dtype=np.int64)
        served = []
        live_load = net.load_p * net.load_scale * net.load_live
        for k, buses in enumerate(components(net)):
            bus_island[buses] = k
            mask = np.isin(net.load_bus, buses)
            served.append(float(live_load[mask].sum() * net.base_mva))
        snap = PhaseSnapshot(self.iteration, phase, bus_island, net.branch_live.copy(), served,
                             net.served_load() * net.base_mva)
        if self.cyber is not None:
            comp = np.full(self.cyber.n_nodes, -1, dtype=np.int64)
            for k, nodes in enumerate(self.cyber.components()):
                comp[nodes] = k
            snap.node_component = comp
            snap.edge_in_service = self.cyber.edge_in_service.copy()
        self.phase_log.append(snap)

    # cumulative views
    @property
    def lost_buses(self):
        return set(np.flatnonzero(~self.power.bus_in_service).tolist())

    @property
    def lost_branches(self):
        return set(np.flatnonzero(~self.power.branch_live).tolist())

    @property
    def lost_cyber_nodes(self):
        if self.cyber is None:
            return set()
        return set(np.flatnonzero(~self.cyber.node_in_service).tolist())


def _resolve_branch(net, item):
    if isinstance(item, tuple):
        a, b = net.bus_pos(item[0]), net.bus_pos(item[1])
        hit = np.flatnonzero(((net.br_from == a) & (net.br_to == b)) | ((net.br_from == b) & (net.br_to == a)))
        if hit.size == 0:
            raise KeyError(f"no branch between buses {item[0]} and {item[1]}")
        return int(hit[0])
    k = int(item)
    if not 0 <= k < net.n_branch:
        raise KeyError(f"unknown branch id {item}")
    return k


def trigger(state, attack_buses=(), attack_branches=()):
    """Take the attacked buses (by bus id) and branches out of service.

    Branches are given by row id or as a ``(from_bus_id, to_bus_id)`` pair.
    """
    net = state.power
    bus_pos = [net.bus_pos(b) for b in attack_buses]
    br_pos = [_resolve_branch(net, e) for e in attack_branches]
    net.remove_buses(bus_pos)
    net.remove_branches(br_pos)
    state.snapshot("trigger")
    return state


def phase_a(state):
    """Propagate inside the power layer until an inner pass changes nothing."""
    net = state.power
    while True:
        buses_before = net.bus_in_service.copy()
        branches_before = net.branch_live.copy()
        for island in extract_islands(net):
            result = shed_and_solve(net, island, state.options)
            if result.solved:
                tripped = remove_overloaded_branches(net, result.solution)
                state.overload_trips.extend((state.iteration, b) for b in sorted(tripped))
        if (np.array_equal(buses_before, net.bus_in_service)
                and np.array_equal(branches_before, net.branch_live)):
            break
    live_bus, live_br = net.bus_in_service, net.branch_live
    state.failed_power_buses = set(np.flatnonzero(state._bus_mark & ~live_bus).tolist())
    state.failed_power_branches = set(np.flatnonzero(state._branch_mark & ~live_br).tolist())
    state._bus_mark = live_bus.copy()
    state._branch_mark = live_br.copy()
    state.snapshot("A")
    return state


def phase_b(state):
    """Hand power-bus losses to the cyber layer, or stop if there are none."""
    if not state.failed_power_buses:
        state.stopped = True
    elif state.cyber is not None:
        nodes = state.cyber.coupling[sorted(state.failed_power_buses)]
        state.cyber.node_in_service[nodes] = False
    state.snapshot("B")
    return state


def phase_c(state):
    """Keep only the giant cyber component."""
    cyber = state.cyber
    if cyber is not None:
        giant_component_prune(cyber)
        live_node, live_edge = cyber.node_in_service, cyber.edge_in_service
        state.failed_cyber_nodes = set(np.flatnonzero(state._node_mark & ~live_node).tolist())
        state.failed_cyber_edges = set(np.flatnonzero(state._edge_mark & ~live_edge).tolist())
        state._node_mark = live_node.copy()
        state._edge_mark = live_edge.copy()
    state.snapshot("C")
    return state


def phase_d(state):
    """Hand newly failed cyber nodes back to the power layer, or stop."""
    cyber = state.cyber
    if cyber is not None:
        if not state.failed_cyber_nodes:
            state.stopped = True
        else:
            buses = cyber.bus_of[sorted(state.failed_cyber_nodes)]
            buses = buses[buses >= 0]
            state.power.remove_buses(buses[state.power.bus_in_service[buses]])
    state.snapshot("D")
    return state


def check_blackout(state):
    """More than half of the buses, branches or active load lost."""
    net = state.power
    return (net.n_live_buses < state.n0 / 2
            or net.n_live_branches < state.m0 / 2
            or net.served_load() < state.l0 / 2)


@dataclass
class CascadeResult:
    blackout: bool
    state: CascadeState

    @property
    def iterations(self):
        return self.state.iteration

    @property
    def abnormal(self):
        return self.state.abnormal

    def summary(self):
        st = self.state
        net = st.power
        base = net.base_mva
        live = net.load_live
        served = net.served_load() * base
        shed = float(np.sum(net.load_p[live] * (1 - net.load_scale[live]))) * base
        return {
            "blackout": self.blackout,
            "abnormal_termination": st.abnormal,
            "iterations": st.iteration,
            "initial_buses": st.n0,
            "initial_branches": st.m0,
            "initial_load_mw": st.l0 * base,
            "live_buses": net.n_live_buses,
            "live_branches": net.n_live_branches,
            "served_load_mw": served,
            "shed_load_mw": shed,
            "lost_load_mw": st.l0 * base - served - shed,
            "overload_trips": [[it, int(b)] for it, b in st.overload_trips],
        }


def run_cascade(power, cyber=None, attack_buses=(), attack_branches=(), options=SolverOptions(),
                record=True):
    """Run one cascade on working copies of ``power`` and ``cyber``.

    Returns a :class:`CascadeResult`; the inputs are left untouched.
    """
    state = CascadeState(power.copy(), None if cyber is None else cyber.copy(), options, record)
    trigger(state, attack_buses, attack_branches)
    cap = state.n0 + state.m0 + 1
    while True:
        if state.iteration >= cap:
            state.abnormal = True
            log.error("cascade hit the safety cap of %d iterations", cap)
            break
        state.iteration += 1
        phase_a(state)
        phase_b(state)
        if state.stopped:
            break
        phase_c(state)
        phase_d(state)
        if state.stopped:
            break
    return CascadeResult(check_blackout(state), state)


def base_case_flows(network, options=SolverOptions()):
    """Larger-terminal apparent power (MVA) of every branch in the intact base case.

    Solves a scratch copy with the same island rules the cascade uses, so
    curtailment and shedding match what phase A will see.
    """
    net = network.copy()
    flow = np.zeros(net.n_branch)
    for island in extract_islands(net):
        result = shed_and_solve(net, island, options)
        if result.solved:
            sol = result.solution
            s = np.maximum(np.hypot(sol.p_from, sol.q_from), np.hypot(sol.p_to, sol.q_to))
            flow[sol.branches] = s * net.base_mva
    return flow


def prepare_network(network, alpha=1.2, floor=5.0, options=SolverOptions(), uprate_overloaded=True):
    """Base network ready for cascades: every branch rated, arrays read-only."""
    flows = base_case_flows(network, options)
    return normalize_ratings(network, flows, alpha, floor, uprate_overloaded).freeze()
