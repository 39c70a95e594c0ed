"""AC power flow on one connected island (polar Newton-Raphson).

Bus balance is evaluated from Π-model terminal flows:

    P_i^g - P_i^d = g_sh,i V_i^2 + sum_out P_lm + sum_in P_ml
    Q_i^g - Q_i^d = -b_sh,i V_i^2 + sum_out Q_lm + sum_in Q_ml

The Newton Jacobian comes from the complex admittance matrix instead, so the
residual and its derivative are assembled along two different routes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import BusKind


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-8
    max_iter: int = 20
    flat_start: bool = True
    # reactive limits of PV buses are never enforced; kept as an explicit knob
    enforce_q_limits: bool = False


@dataclass
class PowerFlowSolution:
    """Converged (or last) state of one island.

    ``buses`` and ``branches`` are network positions; every other array is
    aligned with one of them. Flows are per-unit terminal powers.
    """

    buses: np.ndarray
    branches: np.ndarray
    v_mag: np.ndarray
    v_ang: np.ndarray
    p_from: np.ndarray
    q_from: np.ndarray
    p_to: np.ndarray
    q_to: np.ndarray
    p_injection: np.ndarray
    q_injection: np.ndarray
    slack: int
    converged: bool
    iterations: int
    max_mismatch: float

    @property
    def losses(self):
        return self.p_from + self.p_to


def line_flow(g, b, b_c, v_l, v_m, theta_l, theta_m, tap=1.0, shift=0.0):
    """Terminal flows ``(P_lm, Q_lm, P_ml, Q_ml)`` of a Π-model branch.

    Works elementwise on arrays. An off-nominal transformer ``tap`` and
    phase ``shift`` at the from end act on the from-side voltage; with the
    defaults this is the plain Π line.
    """
    v_l = v_l / tap
    theta_lm = theta_l - theta_m - shift
    vv = v_l * v_m
    cos, sin = np.cos(theta_lm), np.sin(theta_lm)
    p_lm = g * v_l**2 - g * vv * cos - b * vv * sin
    q_lm = -(b + b_c / 2) * v_l**2 + b * vv * cos - g * vv * sin
    p_ml = g * v_m**2 - g * vv * cos + b * vv * sin
    q_ml = -(b + b_c / 2) * v_m**2 + b * vv * cos + g * vv * sin
    return p_lm, q_lm, p_ml, q_ml


def branch_loading_percent(p_from, q_from, p_to, q_to, rating, base_mva):
    """Percent loading from the larger terminal apparent power."""
    rating = np.asarray(rating, dtype=float)
    if np.any(rating <= 0):
        raise ValueError("branch ratings must be positive")
    s = np.maximum(np.hypot(p_from, q_from), np.hypot(p_to, q_to))
    return 100.0 * s * base_mva / rating


class IslandModel:
    """Per-island arrays in local bus numbering, ready for the solver."""

    def __init__(self, net, buses=None, require_slack=True):
        if buses is None:
            buses = np.flatnonzero(net.bus_in_service)
        buses = np.asarray(buses, dtype=np.int64)
        self.net = net
        self.buses = buses
        n = len(buses)
        self.n = n
        local = np.full(net.n_bus, -1, dtype=np.int64)
        local[buses] = np.arange(n)

        live = net.branch_live
        br = np.flatnonzero(live & (local[net.br_from] >= 0) & (local[net.br_to] >= 0))
        self.branches = br
        self.f = local[net.br_from[br]]
        self.t = local[net.br_to[br]]
        self.g = net.br_g[br]
        self.b = net.br_b[br]
        self.bc = net.br_bc[br]
        self.tap = net.br_tap[br]
        self.shift = net.br_shift[br]
        self.g_sh = net.g_sh[buses]
        self.b_sh = net.b_sh[buses]

        gens = np.flatnonzero(net.gen_live & (local[net.gen_bus] >= 0))
        loads = np.flatnonzero(net.load_live & (local[net.load_bus] >= 0))
        self.gens, self.loads = gens, loads
        gb = local[net.gen_bus[gens]]
        lb = local[net.load_bus[loads]]
        scale = net.load_scale[loads]
        self.p_spec = (np.bincount(gb, net.gen_p[gens], n)
                       - np.bincount(lb, net.load_p[loads] * scale, n))
        self.q_spec = (np.bincount(gb, net.gen_q[gens], n)
                       - np.bincount(lb, net.load_q[loads] * scale, n))
        self.p_load = np.bincount(lb, net.load_p[loads] * scale, n)
        self.q_load = np.bincount(lb, net.load_q[loads] * scale, n)

        has_gen = np.bincount(gb, minlength=n) > 0
        kind = net.bus_kind[buses].astype(np.int64)
        slack = np.flatnonzero(kind == BusKind.SLACK)
        if len(slack) != 1 and require_slack:
            raise ValueError(f"island must have exactly one slack bus, found {len(slack)}")
        self.slack = int(slack[0]) if len(slack) else 0
        pv = (kind == BusKind.PV) & has_gen
        pv[self.slack] = False
        self.pv = np.flatnonzero(pv)
        pq = np.ones(n, dtype=bool)
        pq[self.pv] = False
        pq[self.slack] = False
        self.pq = np.flatnonzero(pq)
        self.pvpq = np.flatnonzero(pv | pq)

        # voltage set points: first live generator at the bus wins
        self.v_set = net.v_mag[buses].copy()
        for k in gens[::-1]:
            self.v_set[local[net.gen_bus[k]]] = net.gen_vset[k]

    # -- residual via terminal flows ----------------------------------------

    def flows(self, vm, va):
        return line_flow(self.g, self.b, self.bc, vm[self.f], vm[self.t],
                         va[self.f], va[self.t], self.tap, self.shift)

    def injections(self, vm, va):
        """Net (P, Q) leaving each bus into shunts and branches."""
        p_lm, q_lm, p_ml, q_ml = self.flows(vm, va)
        n = self.n
        p = self.g_sh * vm**2 + np.bincount(self.f, p_lm, n) + np.bincount(self.t, p_ml, n)
        q = -self.b_sh * vm**2 + np.bincount(self.f, q_lm, n) + np.bincount(self.t, q_ml, n)
        return p, q

    def mismatch(self, vm, va):
        p, q = self.injections(vm, va)
        return self.p_spec - p, self.q_spec - q

    def residual(self, vm, va):
        dp, dq = self.mismatch(vm, va)
        return np.concatenate([dp[self.pvpq], dq[self.pq]])

    # -- Jacobian via complex admittance matrix -------------------------------

    def ybus(self):
        n = self.n
        ys = self.g + 1j * self.b
        ratio = self.tap * np.exp(1j * self.shift)
        ytt = ys + 0.5j * self.bc
        yff = ytt / (self.tap**2)
        yft = -ys / np.conj(ratio)
        ytf = -ys / ratio
        y = np.zeros((n, n), dtype=complex)
        np.add.at(y, (self.f, self.f), yff)
        np.add.at(y, (self.t, self.t), ytt)
        np.add.at(y, (self.f, self.t), yft)
        np.add.at(y, (self.t, self.f), ytf)
        y[np.diag_indices(n)] += self.g_sh + 1j * self.b_sh
        return y

    def jacobian(self, vm, va, y=None):
        """Derivative of :meth:`residual` w.r.t. ``[va[pvpq], vm[pq]]``."""
        if y is None:
            y = self.ybus()
        v = vm * np.exp(1j * va)
        ibus = y @ v
        vnorm = v / vm
        ds_dva = 1j * v[:, None] * np.conj(np.diag(ibus) - y * v[None, :])
        ds_dvm = v[:, None] * np.conj(y * vnorm[None, :]) + np.diag(np.conj(ibus) * vnorm)
        rows_p, rows_q = self.pvpq, self.pq
        j11 = ds_dva.real[np.ix_(rows_p, self.pvpq)]
        j12 = ds_dvm.real[np.ix_(rows_p, self.pq)]
        j21 = ds_dva.imag[np.ix_(rows_q, self.pvpq)]
        j22 = ds_dvm.imag[np.ix_(rows_q, self.pq)]
        # residual = specified - computed
        return -np.block([[j11, j12], [j21, j22]])

    def initial_state(self, flat_start=True):
        if flat_start:
            vm = np.ones(self.n)
            va = np.zeros(self.n)
        else:
            vm = self.net.v_mag[self.buses].astype(float).copy()
            va = self.net.v_ang[self.buses].astype(float).copy()
            va -= va[self.slack]
        vm[self.pv] = self.v_set[self.pv]
        vm[self.slack] = self.v_set[self.slack]
        va[self.slack] = 0.0
        return vm, va


def bus_mismatch(net, v_mag, v_ang, buses=None):
    """Per-bus ``(dP, dQ)`` in p.u. for the island ``buses`` (default: all live buses).

    ``v_mag``/``v_ang`` are aligned with ``buses``. Every bus is reported,
    including the slack P and PV Q rows the solver leaves out.
    """
    model = IslandModel(net, buses, require_slack=False)
    return model.mismatch(np.asarray(v_mag, float), np.asarray(v_ang, float))


def solve(net, options=SolverOptions(), buses=None):
    """Newton-Raphson power flow on one connected island.

    Never raises on numerical trouble: divergence, a singular Jacobian or
    exhausting ``max_iter`` all come back as ``converged=False``.
    """
    model = IslandModel(net, buses)
    vm, va = model.initial_state(options.flat_start)
    pvpq, pq = model.pvpq, model.pq
    npvpq = len(pvpq)
    y = model.ybus()

    f = model.residual(vm, va)
    norm = np.max(np.abs(f)) if f.size else 0.0
    converged = norm <= options.tol
    it = 0
    with np.errstate(all="ignore"):
        while not converged and it < options.max_iter:
            it += 1
            jac = model.jacobian(vm, va, y)
            try:
                dx = np.linalg.solve(jac, -f)
            except np.linalg.LinAlgError:
                break
            if not np.all(np.isfinite(dx)):
                break
            va[pvpq] += dx[:npvpq]
            vm[pq] += dx[npvpq:]
            if np.any(vm[pq] <= 0):
                break
            f = model.residual(vm, va)
            norm = np.max(np.abs(f)) if f.size else 0.0
            if not np.isfinite(norm):
                break
            converged = norm <= options.tol

    return _pack(model, vm, va, bool(converged), it, float(norm))


def _pack(model, vm, va, converged, iterations, norm):
    p_lm, q_lm, p_ml, q_ml = model.flows(vm, va)
    p_inj, q_inj = model.injections(vm, va)
    return PowerFlowSolution(
        buses=model.buses, branches=model.branches, v_mag=vm, v_ang=va,
        p_from=p_lm, q_from=q_lm, p_to=p_ml, q_to=q_ml,
        p_injection=p_inj + model.p_load, q_injection=q_inj + model.q_load,
        slack=int(model.buses[model.slack]), converged=converged,
        iterations=iterations, max_mismatch=norm,
    )


def solution_loading(net, solution):
    """Loading percent of each branch in ``solution.branches``."""
    return branch_loading_percent(solution.p_from, solution.q_from, solution.p_to,
                                  solution.q_to, net.br_rating[solution.branches], net.base_mva)
