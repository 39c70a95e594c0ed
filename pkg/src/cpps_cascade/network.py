"""Power network data model and MATPOWER case-file I/O.

The network is stored column-wise in numpy arrays (one array per field) so
that island extraction and power-flow assembly can work with fancy indexing.
All electrical quantities are kept in per-unit on ``base_mva``; MW/MVAr only
appear in the record views (:class:`Bus`, :class:`Branch`, ...) and in the
case-file text. Branch ratings are the one exception and stay in MVA.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

import numpy as np


class CaseParseError(ValueError):
    """Malformed or inconsistent case file."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class BusKind(enum.IntEnum):
    PQ = 1
    PV = 2
    SLACK = 3


def branch_admittance(r, x):
    """Series admittance ``g + jb = 1 / (r + jx)`` of a branch, in p.u."""
    denom = r * r + x * x
    if denom == 0.0:
        raise ValueError("zero-impedance branch (r = x = 0) has no finite admittance")
    return r / denom, -x / denom


# ---------------------------------------------------------------------------
# Record views
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Bus:
    id: int
    kind: BusKind = BusKind.PQ
    v_mag: float = 1.0
    v_ang: float = 0.0  # radians
    g_sh: float = 0.0  # p.u.
    b_sh: float = 0.0  # p.u.
    in_service: bool = True


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    r: float
    x: float
    b_c: float = 0.0  # total charging susceptance, p.u.
    rating: float = 0.0  # MVA, 0 = unrated
    tap: float = 1.0
    shift: float = 0.0  # radians
    in_service: bool = True

    @property
    def g(self):
        return branch_admittance(self.r, self.x)[0]

    @property
    def b(self):
        return branch_admittance(self.r, self.x)[1]


@dataclass(frozen=True)
class Generator:
    bus: int
    p_set: float  # MW
    q_set: float = 0.0  # MVAr
    p_max: float = math.inf
    p_min: float = 0.0
    v_set: float = 1.0
    in_service: bool = True


@dataclass(frozen=True)
class Load:
    bus: int
    p: float  # MW
    q: float = 0.0  # MVAr
    scale: float = 1.0


# ---------------------------------------------------------------------------
# Column store
# ---------------------------------------------------------------------------


@dataclass
class PowerNetwork:
    """Buses, branches, generators and loads of one power system.

    Components are addressed by position: bus positions ``0..n-1`` (the
    case-file bus number lives in ``bus_id``), branch and generator ids are
    their row positions in the case file. Branch/generator/load bus fields
    hold bus *positions*.
    """

    base_mva: float
    bus_id: np.ndarray
    bus_kind: np.ndarray
    v_mag: np.ndarray
    v_ang: np.ndarray
    g_sh: np.ndarray
    b_sh: np.ndarray
    bus_in_service: np.ndarray
    br_from: np.ndarray
    br_to: np.ndarray
    br_r: np.ndarray
    br_x: np.ndarray
    br_g: np.ndarray
    br_b: np.ndarray
    br_bc: np.ndarray
    br_tap: np.ndarray
    br_shift: np.ndarray
    br_rating: np.ndarray
    br_in_service: np.ndarray
    gen_bus: np.ndarray
    gen_p: np.ndarray
    gen_q: np.ndarray
    gen_pmax: np.ndarray
    gen_pmin: np.ndarray
    gen_vset: np.ndarray
    gen_in_service: np.ndarray
    load_bus: np.ndarray
    load_p: np.ndarray
    load_q: np.ndarray
    load_scale: np.ndarray
    _index: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self._index is None:
            self._index = {int(b): i for i, b in enumerate(self.bus_id)}
        if len(self._index) != len(self.bus_id):
            raise ValueError("bus ids must be unique")
        for name in ("br_from", "br_to", "gen_bus", "load_bus"):
            pos = getattr(self, name)
            if pos.size and (pos.min() < 0 or pos.max() >= self.n_bus):
                raise ValueError(f"{name} references a nonexistent bus")
        if np.any(self.br_from == self.br_to):
            raise ValueError("branch endpoints must differ")

    # -- construction -----------------------------------------------------

    @classmethod
    def from_records(cls, buses, branches, generators=(), loads=(), base_mva=100.0):
        """Build a network from record views (MW/MVAr units for gens and loads)."""
        buses = list(buses)
        index = {b.id: i for i, b in enumerate(buses)}

        def pos(bus_id):
            try:
                return index[bus_id]
            except KeyError:
                raise ValueError(f"reference to nonexistent bus id {bus_id}") from None

        r = np.array([br.r for br in branches], dtype=float)
        x = np.array([br.x for br in branches], dtype=float)
        g, b = _admittances(r, x)
        f = np.asarray
        return cls(
            base_mva=float(base_mva),
            bus_id=f([b_.id for b_ in buses], dtype=np.int64),
            bus_kind=f([int(b_.kind) for b_ in buses], dtype=np.int8),
            v_mag=f([b_.v_mag for b_ in buses], dtype=float),
            v_ang=f([b_.v_ang for b_ in buses], dtype=float),
            g_sh=f([b_.g_sh for b_ in buses], dtype=float),
            b_sh=f([b_.b_sh for b_ in buses], dtype=float),
            bus_in_service=f([b_.in_service for b_ in buses], dtype=bool),
            br_from=f([pos(br.from_bus) for br in branches], dtype=np.int64),
            br_to=f([pos(br.to_bus) for br in branches], dtype=np.int64),
            br_r=r,
            br_x=x,
            br_g=g,
            br_b=b,
            br_bc=f([br.b_c for br in branches], dtype=float),
            br_tap=f([br.tap for br in branches], dtype=float),
            br_shift=f([br.shift for br in branches], dtype=float),
            br_rating=f([br.rating for br in branches], dtype=float),
            br_in_service=f([br.in_service for br in branches], dtype=bool),
            gen_bus=f([pos(gn.bus) for gn in generators], dtype=np.int64),
            gen_p=f([gn.p_set / base_mva for gn in generators], dtype=float),
            gen_q=f([gn.q_set / base_mva for gn in generators], dtype=float),
            gen_pmax=f([gn.p_max / base_mva for gn in generators], dtype=float),
            gen_pmin=f([gn.p_min / base_mva for gn in generators], dtype=float),
            gen_vset=f([gn.v_set for gn in generators], dtype=float),
            gen_in_service=f([gn.in_service for gn in generators], dtype=bool),
            load_bus=f([pos(ld.bus) for ld in loads], dtype=np.int64),
            load_p=f([ld.p / base_mva for ld in loads], dtype=float),
            load_q=f([ld.q / base_mva for ld in loads], dtype=float),
            load_scale=f([ld.scale for ld in loads], dtype=float),
            _index=index,
        )

    def copy(self):
        """Writable deep copy (a cascade's working network)."""
        kw = {}
        for fl in fields(self):
            val = getattr(self, fl.name)
            kw[fl.name] = val.copy() if isinstance(val, np.ndarray) else val
        return PowerNetwork(**kw)

    def freeze(self):
        """Make every array read-only; returns self."""
        for fl in fields(self):
            val = getattr(self, fl.name)
            if isinstance(val, np.ndarray):
                val.flags.writeable = False
        return self

    # -- sizes and lookups --------------------------------------------------

    @property
    def n_bus(self):
        return len(self.bus_id)

    @property
    def n_branch(self):
        return len(self.br_from)

    def bus_pos(self, bus_id):
        try:
            return self._index[int(bus_id)]
        except KeyError:
            raise KeyError(f"unknown bus id {bus_id}") from None

    @property
    def branch_live(self):
        """Branches in service with both terminal buses in service."""
        return self.br_in_service & self.bus_in_service[self.br_from] & self.bus_in_service[self.br_to]

    @property
    def gen_live(self):
        return self.gen_in_service & self.bus_in_service[self.gen_bus]

    @property
    def load_live(self):
        return self.bus_in_service[self.load_bus]

    @property
    def n_live_buses(self):
        return int(self.bus_in_service.sum())

    @property
    def n_live_branches(self):
        return int(self.branch_live.sum())

    def served_load(self):
        """Active load currently served, in p.u. (scaled loads at live buses)."""
        live = self.load_live
        return float(np.sum(self.load_p[live] * self.load_scale[live]))

    def total_load(self):
        """Unscaled active load at live buses, p.u."""
        return float(np.sum(self.load_p[self.load_live]))

    # -- mutation (working copies only) ------------------------------------

    def remove_buses(self, positions):
        """Take buses out of service together with their incident branches."""
        positions = np.asarray(list(positions), dtype=np.int64)
        if positions.size == 0:
            return
        self.bus_in_service[positions] = False
        mask = np.zeros(self.n_bus, dtype=bool)
        mask[positions] = True
        self.br_in_service[mask[self.br_from] | mask[self.br_to]] = False

    def remove_branches(self, positions):
        positions = np.asarray(list(positions), dtype=np.int64)
        if positions.size:
            self.br_in_service[positions] = False

    # -- record views ---------------------------------------------------------

    @property
    def buses(self):
        return tuple(
            Bus(int(self.bus_id[i]), BusKind(int(self.bus_kind[i])), float(self.v_mag[i]),
                float(self.v_ang[i]), float(self.g_sh[i]), float(self.b_sh[i]),
                bool(self.bus_in_service[i]))
            for i in range(self.n_bus)
        )

    @property
    def branches(self):
        ids = self.bus_id
        return tuple(
            Branch(int(ids[self.br_from[k]]), int(ids[self.br_to[k]]), float(self.br_r[k]),
                   float(self.br_x[k]), float(self.br_bc[k]), float(self.br_rating[k]),
                   float(self.br_tap[k]), float(self.br_shift[k]), bool(self.br_in_service[k]))
            for k in range(self.n_branch)
        )

    @property
    def generators(self):
        base = self.base_mva
        return tuple(
            Generator(int(self.bus_id[self.gen_bus[k]]), float(self.gen_p[k] * base),
                      float(self.gen_q[k] * base), float(self.gen_pmax[k] * base),
                      float(self.gen_pmin[k] * base), float(self.gen_vset[k]),
                      bool(self.gen_in_service[k]))
            for k in range(len(self.gen_bus))
        )

    @property
    def loads(self):
        base = self.base_mva
        return tuple(
            Load(int(self.bus_id[self.load_bus[k]]), float(self.load_p[k] * base),
                 float(self.load_q[k] * base), float(self.load_scale[k]))
            for k in range(len(self.load_bus))
        )

    def equals(self, other):
        """Field-by-field equality of all arrays and the MVA base."""
        if self.base_mva != other.base_mva:
            return False
        for fl in fields(self):
            if fl.name.startswith("_") or fl.name == "base_mva":
                continue
            if not np.array_equal(getattr(self, fl.name), getattr(other, fl.name)):
                return False
        return True


def _admittances(r, x):
    denom = r * r + x * x
    if np.any(denom == 0.0):
        k = int(np.flatnonzero(denom == 0.0)[0])
        raise ValueError(f"branch {k} has zero impedance")
    return r / denom, -x / denom


# ---------------------------------------------------------------------------
# Ratings
# ---------------------------------------------------------------------------


def normalize_ratings(network, base_flow, alpha=1.2, floor=5.0, uprate_overloaded=False):
    """Fill missing branch ratings from a base-case flow.

    Branches that already carry a positive rating keep it. Unrated branches
    get ``alpha * base_flow`` (MVA, the larger of the two terminal flows),
    but never less than ``floor`` MVA. With ``uprate_overloaded`` a given
    rating that the base case already exceeds is raised the same way, so the
    intact network is overload-free. Returns a new network.
    """
    base_flow = np.abs(np.asarray(base_flow, dtype=float))
    if base_flow.shape != network.br_rating.shape:
        raise ValueError("base_flow must have one entry per branch")
    out = network.copy()
    fill = ~(out.br_rating > 0)
    if uprate_overloaded:
        fill |= base_flow > out.br_rating
    out.br_rating[fill] = np.maximum(alpha * base_flow[fill], floor)
    return out


# ---------------------------------------------------------------------------
# MATPOWER text format
# ---------------------------------------------------------------------------

_BUS_COLS, _GEN_COLS, _BRANCH_COLS = 13, 10, 11
_MATRIX_RE = re.compile(r"mpc\.(\w+)\s*=\s*\[")
_SCALAR_RE = re.compile(r"mpc\.baseMVA\s*=\s*([^;%\s]+)\s*;?")


def _strip_comment(line):
    # MATPOWER files use '%' comments; strings never contain '%' in the tables we read
    return line.split("%", 1)[0]


def _read_matrices(text):
    lines = text.splitlines()
    matrices = {}
    base_mva = None
    i = 0
    while i < len(lines):
        code = _strip_comment(lines[i])
        m = _SCALAR_RE.search(code)
        if m:
            try:
                base_mva = float(m.group(1))
            except ValueError:
                raise CaseParseError(f"bad baseMVA value {m.group(1)!r}", i + 1) from None
            i += 1
            continue
        m = _MATRIX_RE.search(code)
        if not m:
            i += 1
            continue
        name = m.group(1)
        start = i + 1
        rows = []
        body = code[m.end():]
        while True:
            closed = "]" in body
            chunk = body.split("]", 1)[0]
            for piece in chunk.split(";"):
                tokens = piece.replace(",", " ").split()
                if not tokens:
                    continue
                try:
                    rows.append(([float(t) for t in tokens], i + 1))
                except ValueError:
                    raise CaseParseError(f"non-numeric entry in mpc.{name}: {piece.strip()!r}", i + 1) from None
            if closed:
                break
            i += 1
            if i >= len(lines):
                raise CaseParseError(f"unterminated matrix mpc.{name}", start)
            body = _strip_comment(lines[i])
        matrices[name] = rows
        i += 1
    return base_mva, matrices


def _table(matrices, name, min_cols, required=True):
    rows = matrices.get(name)
    if rows is None:
        if required:
            raise CaseParseError(f"missing mpc.{name} table")
        return np.zeros((0, min_cols)), []
    for vals, line in rows:
        if len(vals) < min_cols:
            raise CaseParseError(f"mpc.{name} row has {len(vals)} columns, need at least {min_cols}", line)
    width = max((len(v) for v, _ in rows), default=min_cols)
    arr = np.zeros((len(rows), width))
    for k, (vals, _) in enumerate(rows):
        arr[k, :len(vals)] = vals
    return arr, [line for _, line in rows]


def parse_case(text, allow_taps=True):
    """Parse MATPOWER case text into a :class:`PowerNetwork` in per-unit.

    Supported subset: ``baseMVA``, ``bus``, ``gen`` and ``branch`` tables
    (``gencost`` and anything else is ignored). Bus type 4 marks an isolated
    bus and is read as out of service. Off-nominal taps and phase shifts are
    kept on the branch; with ``allow_taps=False`` they are rejected instead.
    """
    if not text or not text.strip():
        raise CaseParseError("empty case file")
    base_mva, matrices = _read_matrices(text)
    if base_mva is None:
        raise CaseParseError("missing mpc.baseMVA")
    if not base_mva > 0:
        raise CaseParseError(f"baseMVA must be positive, got {base_mva}")
    bus, _ = _table(matrices, "bus", _BUS_COLS)
    gen, gen_lines = _table(matrices, "gen", _GEN_COLS, required=False)
    branch, br_lines = _table(matrices, "branch", _BRANCH_COLS)
    if len(bus) == 0:
        raise CaseParseError("mpc.bus table is empty")

    bus_id = bus[:, 0].astype(np.int64)
    if not np.array_equal(bus_id, bus[:, 0]):
        raise CaseParseError("bus numbers must be integers")
    index = {}
    for i, b in enumerate(bus_id):
        if int(b) in index:
            raise CaseParseError(f"duplicate bus id {b}")
        index[int(b)] = i

    def lookup(ids, lines, what):
        out = np.empty(len(ids), dtype=np.int64)
        for k, b in enumerate(ids):
            try:
                out[k] = index[int(b)]
            except KeyError:
                raise CaseParseError(f"{what} references nonexistent bus id {int(b)}", lines[k]) from None
        return out

    kinds = bus[:, 1].astype(np.int64)
    bad = ~np.isin(kinds, (1, 2, 3, 4))
    if bad.any():
        raise CaseParseError(f"unknown bus type {kinds[bad][0]}")
    in_service = kinds != 4
    kinds = np.where(kinds == 4, 1, kinds).astype(np.int8)

    tap = branch[:, 8].copy()
    tap[tap == 0.0] = 1.0
    shift = np.deg2rad(branch[:, 9])
    if not allow_taps and (np.any(tap != 1.0) or np.any(shift != 0.0)):
        k = int(np.flatnonzero((tap != 1.0) | (shift != 0.0))[0])
        raise CaseParseError("off-nominal tap or phase shift present but tap support is disabled", br_lines[k])
    br_from = lookup(branch[:, 0], br_lines, "branch")
    br_to = lookup(branch[:, 1], br_lines, "branch")
    for k in np.flatnonzero(br_from == br_to):
        raise CaseParseError("branch connects a bus to itself", br_lines[k])
    r, x = branch[:, 2].copy(), branch[:, 3].copy()
    for k in np.flatnonzero(r * r + x * x == 0.0):
        raise CaseParseError("zero-impedance branch (r = x = 0)", br_lines[k])
    g, b = _admittances(r, x)

    # bus table Vm/Va are the stored starting point; generator Vg is the PV set point
    pd, qd = bus[:, 2], bus[:, 3]
    has_load = (pd != 0.0) | (qd != 0.0)
    return PowerNetwork(
        base_mva=base_mva,
        bus_id=bus_id,
        bus_kind=kinds,
        v_mag=bus[:, 7].copy(),
        v_ang=np.deg2rad(bus[:, 8]),
        g_sh=bus[:, 4] / base_mva,
        b_sh=bus[:, 5] / base_mva,
        bus_in_service=in_service,
        br_from=br_from,
        br_to=br_to,
        br_r=r,
        br_x=x,
        br_g=g,
        br_b=b,
        br_bc=branch[:, 4].copy(),
        br_tap=tap,
        br_shift=shift,
        br_rating=branch[:, 5].copy(),
        br_in_service=branch[:, 10] > 0,
        gen_bus=lookup(gen[:, 0], gen_lines, "generator"),
        gen_p=gen[:, 1] / base_mva,
        gen_q=gen[:, 2] / base_mva,
        gen_pmax=gen[:, 8] / base_mva,
        gen_pmin=gen[:, 9] / base_mva,
        gen_vset=gen[:, 5].copy(),
        gen_in_service=gen[:, 7] > 0,
        load_bus=np.flatnonzero(has_load).astype(np.int64),
        load_p=pd[has_load] / base_mva,
        load_q=qd[has_load] / base_mva,
        load_scale=np.ones(int(has_load.sum())),
        _index=index,
    )


def _inverse_repr(value, forward, backward):
    """Shortest-looking decimal ``d`` with ``forward(d) == value`` exactly.

    Unit conversions (degrees/radians, MW/p.u.) are not exact inverses in
    floating point; nudging by a few ulps recovers an exact round trip.
    """
    guess = backward(value)
    if forward(guess) == value:
        return repr(float(guess))
    lo = hi = guess
    for _ in range(64):
        lo, hi = np.nextafter(lo, -np.inf), np.nextafter(hi, np.inf)
        for cand in (lo, hi):
            if forward(cand) == value:
                return repr(float(cand))
    return repr(float(guess))


def serialize_case(network, name="case"):
    """Write a network back to MATPOWER text; ``parse_case`` inverts it."""
    base = network.base_mva
    to_pu = lambda v: v / base  # noqa: E731
    from_pu = lambda v: v * base  # noqa: E731
    deg = (np.deg2rad, np.rad2deg)
    pd = np.zeros(network.n_bus)
    qd = np.zeros(network.n_bus)
    pd_txt = ["0.0"] * network.n_bus
    qd_txt = ["0.0"] * network.n_bus
    for k, pos in enumerate(network.load_bus):
        pd[pos] += network.load_p[k] * network.load_scale[k]
        qd[pos] += network.load_q[k] * network.load_scale[k]
    for pos in np.unique(network.load_bus):
        pd_txt[pos] = _inverse_repr(pd[pos], to_pu, from_pu)
        qd_txt[pos] = _inverse_repr(qd[pos], to_pu, from_pu)

    out = [f"function mpc = {name}", "mpc.version = '2';", f"mpc.baseMVA = {base!r};", "", "mpc.bus = ["]
    for i in range(network.n_bus):
        kind = int(network.bus_kind[i]) if network.bus_in_service[i] else 4
        out.append("\t" + "\t".join([
            str(int(network.bus_id[i])), str(kind), pd_txt[i], qd_txt[i],
            _inverse_repr(network.g_sh[i], to_pu, from_pu),
            _inverse_repr(network.b_sh[i], to_pu, from_pu),
            "1", repr(float(network.v_mag[i])),
            _inverse_repr(network.v_ang[i], deg[0], deg[1]),
            "0", "1", "1.1", "0.9",
        ]) + ";")
    out += ["];", "", "mpc.gen = ["]
    for k in range(len(network.gen_bus)):
        out.append("\t" + "\t".join([
            str(int(network.bus_id[network.gen_bus[k]])),
            _inverse_repr(network.gen_p[k], to_pu, from_pu),
            _inverse_repr(network.gen_q[k], to_pu, from_pu),
            "9999", "-9999", repr(float(network.gen_vset[k])), repr(base),
            "1" if network.gen_in_service[k] else "0",
            _inverse_repr(network.gen_pmax[k], to_pu, from_pu),
            _inverse_repr(network.gen_pmin[k], to_pu, from_pu),
        ]) + ";")
    out += ["];", "", "mpc.branch = ["]
    for k in range(network.n_branch):
        tap = float(network.br_tap[k])
        out.append("\t" + "\t".join([
            str(int(network.bus_id[network.br_from[k]])), str(int(network.bus_id[network.br_to[k]])),
            repr(float(network.br_r[k])), repr(float(network.br_x[k])), repr(float(network.br_bc[k])),
            repr(float(network.br_rating[k])), "0", "0",
            "0" if tap == 1.0 else repr(tap),
            _inverse_repr(network.br_shift[k], deg[0], deg[1]),
            "1" if network.br_in_service[k] else "0", "-360", "360",
        ]) + ";")
    out += ["];", ""]
    return "\n".join(out)


BUNDLED_CASES = ("case30", "case118", "case300")


def load_case(name_or_path, allow_taps=True):
    """Load a bundled case by name (``case30``, ``case118``, ``case300``) or a file path."""
    if name_or_path in BUNDLED_CASES:
        text = resources.files("cpps_cascade.data").joinpath(f"{name_or_path}.m").read_text()
    else:
        text = Path(name_or_path).read_text()
    return parse_case(text, allow_taps=allow_taps)


def read_coordinates(path_or_text):
    """Read a ``node_id x y`` sidecar file into ``{id: (x, y)}``."""
    text = path_or_text
    if isinstance(path_or_text, Path) or "\n" not in str(path_or_text) and Path(str(path_or_text)).exists():
        text = Path(path_or_text).read_text()
    coords = {}
    for lineno, line in enumerate(str(text).splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise CaseParseError(f"expected 'id x y', got {line!r}", lineno)
        try:
            coords[int(parts[0])] = (float(parts[1]), float(parts[2]))
        except ValueError:
            raise CaseParseError(f"bad coordinate row {line!r}", lineno) from None
    return coords


__all__ = [
    "Branch", "Bus", "BusKind", "CaseParseError", "Generator", "Load", "PowerNetwork",
    "branch_admittance", "load_case", "normalize_ratings", "parse_case", "read_coordinates",
    "serialize_case",
]
