"""Cyber network: topology, power coupling and giant-component survival."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .network import read_coordinates


class CyberTopologyError(ValueError):
    pass


@dataclass
class CyberNetwork:
    """Undirected cyber graph on nodes ``0..n-1``.

    ``coupling[p]`` is the cyber node attached to power bus position ``p``.
    Edges have no independent failure state: an edge is live iff both of
    its endpoints are.
    """

    n_nodes: int
    edges: np.ndarray  # (E, 2) int
    node_in_service: np.ndarray
    coupling: np.ndarray

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if self.edges.size and (self.edges.min() < 0 or self.edges.max() >= self.n_nodes):
            raise CyberTopologyError("edge references a nonexistent cyber node")
        self.coupling = np.asarray(self.coupling, dtype=np.int64)
        if len(np.unique(self.coupling)) != len(self.coupling):
            raise CyberTopologyError("coupling must be one-to-one")
        self.bus_of = np.full(self.n_nodes, -1, dtype=np.int64)
        self.bus_of[self.coupling] = np.arange(len(self.coupling))

    @property
    def edge_in_service(self):
        if not self.edges.size:
            return np.zeros(0, dtype=bool)
        return self.node_in_service[self.edges[:, 0]] & self.node_in_service[self.edges[:, 1]]

    def copy(self):
        return CyberNetwork(self.n_nodes, self.edges.copy(), self.node_in_service.copy(),
                            self.coupling.copy())

    def components(self):
        """Live connected components, each a sorted node array, ordered by smallest node."""
        live = np.flatnonzero(self.node_in_service)
        if live.size == 0:
            return []
        e = self.edges[self.edge_in_service]
        adj = coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(self.n_nodes,) * 2)
        _, labels = connected_components(adj, directed=False)
        groups = {}
        for node in live:
            groups.setdefault(labels[node], []).append(int(node))
        return sorted((np.array(g) for g in groups.values()), key=lambda g: g[0])


def mirror_topology(power):
    """Cyber graph copying the live power branches, identity coupling."""
    live = power.branch_live
    pairs = np.stack([power.br_from[live], power.br_to[live]], axis=1)
    # parallel circuits collapse into one cyber link
    pairs = np.unique(np.sort(pairs, axis=1), axis=0) if len(pairs) else pairs.reshape(0, 2)
    n = power.n_bus
    return CyberNetwork(n, pairs, power.bus_in_service.copy(), np.arange(n))


def read_edge_list(path_or_text):
    """Parse ``u v`` lines (0-based ids; ``#`` comments allowed)."""
    text = path_or_text
    if isinstance(path_or_text, Path) or "\n" not in str(path_or_text):
        text = Path(path_or_text).read_text()
    edges = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise CyberTopologyError(f"line {lineno}: expected 'u v', got {line!r}")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise CyberTopologyError(f"line {lineno}: non-integer node id in {line!r}") from None
        if u < 0 or v < 0:
            raise CyberTopologyError(f"line {lineno}: negative node id")
        if u != v:
            edges.append((u, v))
    return np.array(edges, dtype=np.int64).reshape(-1, 2)


def write_edge_list(path, edges):
    Path(path).write_text("".join(f"{int(u)} {int(v)}\n" for u, v in edges))


def build_cyber_topology(mode, power, cyber_coords=None, power_coords=None):
    """Build the cyber layer for ``power``.

    ``mode`` is ``"none"`` (returns None, power-only cascades), ``"mirror"``
    or ``"file:<path>"`` / ``("file", path)``. In file mode the coupling is
    the identity unless both coordinate maps are given, in which case
    :func:`assign_coupling` picks the distance-minimizing bijection.
    Coordinate maps may be dicts or paths to ``id x y`` sidecar files;
    power coordinates are keyed by bus id, cyber coordinates by node id.
    """
    if isinstance(mode, tuple):
        mode, path = mode
    elif isinstance(mode, str) and mode.startswith("file:"):
        mode, path = "file", mode[5:]
    else:
        path = None
    if mode == "none":
        return None
    if mode == "mirror":
        return mirror_topology(power)
    if mode != "file":
        raise CyberTopologyError(f"unknown cyber mode {mode!r}")

    edges = read_edge_list(path)
    n = power.n_bus
    n_nodes = int(edges.max()) + 1 if edges.size else 0
    if n_nodes != n:
        raise CyberTopologyError(f"cyber edge list has {n_nodes} nodes, power network has {n} buses")
    if cyber_coords is not None and power_coords is not None:
        if not isinstance(cyber_coords, dict):
            cyber_coords = read_coordinates(cyber_coords)
        if not isinstance(power_coords, dict):
            power_coords = read_coordinates(power_coords)
        try:
            pxy = np.array([power_coords[int(b)] for b in power.bus_id])
            cxy = np.array([cyber_coords[c] for c in range(n)])
        except KeyError as exc:
            raise CyberTopologyError(f"missing coordinates for {exc.args[0]}") from None
        coupling = assign_coupling(cxy, pxy)
    else:
        coupling = np.arange(n)
    node_live = np.zeros(n, dtype=bool)
    node_live[coupling] = power.bus_in_service
    return CyberNetwork(n, edges, node_live, coupling)


# ---------------------------------------------------------------------------
# Assignment
# ---------------------------------------------------------------------------


def hungarian(cost):
    """Minimum-cost perfect matching of a square matrix.

    Shortest augmenting path version of the Kuhn-Munkres method, O(n^3).
    Returns ``(col_of_row, u, v)`` with row/column potentials satisfying
    ``cost[i, j] - u[i] - v[j] >= 0`` and equality on matched pairs.
    """
    cost = np.asarray(cost, dtype=float)
    n = cost.shape[0]
    if cost.shape != (n, n):
        raise ValueError("cost matrix must be square")
    # 1-based arrays with a virtual column 0, as in the classic formulation
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    row_of = np.zeros(n + 1, dtype=np.int64)
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        row_of[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = row_of[j0]
            free = ~used[1:]
            cur = cost[i0 - 1] - u[i0] - v[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            cand = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(cand)) + 1
            delta = cand[j1 - 1]
            u[row_of[used]] += delta
            v[used] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if row_of[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            row_of[j0] = row_of[j1]
            j0 = j1
    col_of = np.empty(n, dtype=np.int64)
    col_of[row_of[1:] - 1] = np.arange(n)
    return col_of, u[1:], v[1:]


def _lexicographic_optimum(cost, col_of, u, v, tol):
    """Among optimal matchings, move to the lexicographically smallest one.

    Optimal matchings are exactly the perfect matchings on zero reduced-cost
    edges, so rows are fixed in order, each to the smallest column that
    still admits a perfect matching of the remaining rows (tested by an
    alternating-path search).
    """
    n = len(col_of)
    tight = (cost - u[:, None] - v[None, :]) <= tol
    row_of = np.empty(n, dtype=np.int64)
    row_of[col_of] = np.arange(n)
    fixed_col = np.zeros(n, dtype=bool)
    for i in range(n):
        for j in np.flatnonzero(tight[i] & ~fixed_col):
            if j >= col_of[i]:
                break
            # row r owns j; r must move, freeing a path that ends at col_of[i]
            r = row_of[j]
            target = col_of[i]
            parent = {r: None}
            queue = [r]
            found = None
            while queue and found is None:
                nxt = []
                for row in queue:
                    for c in np.flatnonzero(tight[row] & ~fixed_col):
                        if c == j:
                            continue
                        if c == target:
                            found = (row, c)
                            break
                        owner = row_of[c]
                        if owner != i and owner not in parent:
                            parent[owner] = (row, c)
                            nxt.append(owner)
                    if found is not None:
                        break
                queue = nxt
            if found is None:
                continue
            row, c = found
            while True:
                prev = parent[row]
                col_of[row], row_of[c] = c, row
                if prev is None:
                    break
                row, c = prev
            col_of[i], row_of[j] = j, i
            break
        fixed_col[col_of[i]] = True
    return col_of


def assign_coupling(cyber_xy, power_xy):
    """Bijection power bus -> cyber node minimizing total Euclidean distance.

    Returns ``coupling`` with ``coupling[p]`` the cyber node for power bus
    position ``p``. Among equally short assignments the lexicographically
    smallest ``coupling`` vector is returned.
    """
    cyber_xy = np.asarray(cyber_xy, dtype=float)
    power_xy = np.asarray(power_xy, dtype=float)
    if cyber_xy.shape != power_xy.shape:
        raise ValueError(f"coordinate count mismatch: {len(cyber_xy)} cyber vs {len(power_xy)} power")
    if len(power_xy) == 0:
        return np.zeros(0, dtype=np.int64)
    cost = np.linalg.norm(power_xy[:, None, :] - cyber_xy[None, :, :], axis=2)
    col_of, u, v = hungarian(cost)
    tol = 1e-9 * max(1.0, float(cost.max()))
    return _lexicographic_optimum(cost, col_of, u, v, tol)


def assignment_cost(cyber_xy, power_xy, coupling):
    cyber_xy = np.asarray(cyber_xy, dtype=float)
    power_xy = np.asarray(power_xy, dtype=float)
    return float(np.linalg.norm(power_xy - cyber_xy[np.asarray(coupling)], axis=1).sum())


def giant_component_prune(cyber):
    """Fail every live node outside the largest component; return the newly failed set.

    Size ties go to the component holding the smallest node id.
    """
    comps = cyber.components()
    if len(comps) <= 1:
        return set()
    giant = max(comps, key=lambda c: (len(c), -int(c[0])))
    failed = set()
    for comp in comps:
        if comp is not giant:
            cyber.node_in_service[comp] = False
            failed.update(int(x) for x in comp)
    return failed
