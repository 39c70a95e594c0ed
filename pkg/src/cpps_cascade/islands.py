"""Island handling inside the power layer.

Connected components of the live network are viable only with both
generation and load. Viable islands get a slack bus if they lost theirs,
surplus generation is curtailed by a common factor, and demand deficits are
handled by a load-shedding ladder that tries ``s = 1.00, 0.95, ..., 0.05``
until a power flow converges.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .network import BusKind
from .powerflow import SolverOptions, solution_loading, solve

SHED_LADDER = tuple(round(1.0 - 0.05 * i, 2) for i in range(20))
_SCREEN_RTOL = 1e-9


@dataclass
class Island:
    id: int
    buses: np.ndarray
    slack: int | None = None


@dataclass
class ShedResult:
    status: str  # "solved" or "failed"
    scale: float | None = None
    solution: object = None

    @property
    def solved(self):
        return self.status == "solved"


def components(net):
    """Connected components of the live network as a list of sorted bus-position arrays.

    Ordered by smallest contained bus position, which also fixes island ids.
    """
    live_bus = np.flatnonzero(net.bus_in_service)
    if live_bus.size == 0:
        return []
    br = net.branch_live
    f, t = net.br_from[br], net.br_to[br]
    n = net.n_bus
    adj = coo_matrix((np.ones(len(f)), (f, t)), shape=(n, n))
    _, labels = connected_components(adj, directed=False)
    labels = labels[live_bus]
    order = np.argsort(labels, kind="stable")
    labels, live_bus = labels[order], live_bus[order]
    splits = np.flatnonzero(np.diff(labels)) + 1
    groups = [np.sort(g) for g in np.split(live_bus, splits)]
    groups.sort(key=lambda g: g[0])
    return groups


def _island_gens(net, buses):
    mask = np.zeros(net.n_bus, dtype=bool)
    mask[buses] = True
    return np.flatnonzero(net.gen_live & mask[net.gen_bus])


def _island_loads(net, buses):
    mask = np.zeros(net.n_bus, dtype=bool)
    mask[buses] = True
    return np.flatnonzero(net.load_live & mask[net.load_bus])


def island_capacity(net, buses):
    return float(net.gen_pmax[_island_gens(net, buses)].sum())


def island_demand(net, buses, scaled=True):
    loads = _island_loads(net, buses)
    p = net.load_p[loads]
    if scaled:
        p = p * net.load_scale[loads]
    return float(p.sum())


def assign_slack(net, buses):
    """Make sure the island has a slack bus and return its bus id.

    An existing slack is kept. Otherwise the bus with the largest total
    in-service generator capacity is promoted; ties go to the lowest bus id.
    """
    buses = np.asarray(buses)
    slack = buses[net.bus_kind[buses] == BusKind.SLACK]
    if len(slack):
        for extra in slack[1:]:
            net.bus_kind[extra] = BusKind.PV
        return int(net.bus_id[slack[0]])
    gens = _island_gens(net, buses)
    if gens.size == 0:
        raise ValueError("island has no in-service generator to act as slack")
    cap = {}
    for k in gens:
        pos = int(net.gen_bus[k])
        cap[pos] = cap.get(pos, 0.0) + float(net.gen_pmax[k])
    best = max(cap, key=lambda pos: (cap[pos], -int(net.bus_id[pos])))
    net.bus_kind[best] = BusKind.SLACK
    return int(net.bus_id[best])


def curtail_generation(net, buses):
    """Scale live generator set points so total generation equals the scaled demand.

    Only acts when generation exceeds demand; returns the factor applied.
    """
    gens = _island_gens(net, buses)
    total_gen = float(net.gen_p[gens].sum())
    demand = island_demand(net, buses)
    if total_gen <= demand:
        return 1.0
    if total_gen == 0.0:
        raise ValueError("cannot curtail an island without generation")
    factor = demand / total_gen
    net.gen_p[gens] *= factor
    return factor


def extract_islands(net):
    """Split the live network into viable islands, updating service flags.

    Components without live generation or without active load are taken
    out of service in full. Each surviving island gets exactly one slack
    and has surplus generation curtailed.
    """
    islands = []
    for buses in components(net):
        has_gen = _island_gens(net, buses).size > 0
        has_load = island_demand(net, buses, scaled=False) > 0.0
        if not (has_gen and has_load):
            net.remove_buses(buses)
            continue
        slack_id = assign_slack(net, buses)
        curtail_generation(net, buses)
        islands.append(Island(len(islands), buses, net.bus_pos(slack_id)))
    return islands


def shed_and_solve(net, island, options=SolverOptions()):
    """Walk the shedding ladder until a power flow converges.

    Rungs whose demand exceeds the island's generation capacity are skipped
    without solving. If every rung fails, the island is removed.
    """
    buses = island.buses if isinstance(island, Island) else np.asarray(island)
    loads = _island_loads(net, buses)
    demand = float(net.load_p[loads].sum())
    capacity = island_capacity(net, buses)
    for s in SHED_LADDER:
        if s * demand > capacity * (1 + _SCREEN_RTOL) + _SCREEN_RTOL:
            continue
        net.load_scale[loads] = s
        sol = solve(net, options, buses)
        if sol.converged:
            net.v_mag[sol.buses] = sol.v_mag
            net.v_ang[sol.buses] = sol.v_ang
            return ShedResult("solved", s, sol)
    net.remove_buses(buses)
    return ShedResult("failed")


def overloaded_branches(loading, branches):
    """Branch ids whose loading is strictly above 100 %."""
    loading = np.asarray(loading)
    return {int(b) for b in np.asarray(branches)[loading > 100.0]}


def remove_overloaded_branches(net, solution):
    """Trip every branch of the solved island loaded above 100 %, all at once."""
    tripped = overloaded_branches(solution_loading(net, solution), solution.branches)
    net.remove_branches(sorted(tripped))
    return tripped
