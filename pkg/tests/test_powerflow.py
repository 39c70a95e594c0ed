import numpy as np
import pytest

from conftest import random_island, two_bus
from cpps_cascade.network import Branch, Bus, BusKind, Generator, Load, PowerNetwork, load_case
from cpps_cascade.powerflow import (
    IslandModel,
    SolverOptions,
    branch_loading_percent,
    bus_mismatch,
    line_flow,
    solve,
)
from oracles import complex_power, fd_jacobian, solve_two_bus, two_bus_max_load, ybus


def single_bus(gen_mw, load_mw):
    gens = [Generator(1, gen_mw)] if gen_mw else []
    return PowerNetwork.from_records([Bus(1, BusKind.SLACK)], [], gens, [Load(1, load_mw)])


def test_mismatch_single_bus_balanced():
    dp, dq = bus_mismatch(single_bus(100.0, 100.0), [1.0], [0.0])
    assert dp[0] == pytest.approx(0.0, abs=1e-15)


def test_mismatch_single_bus_unserved_load():
    dp, _ = bus_mismatch(single_bus(0.0, 50.0), [1.0], [0.0])
    assert dp[0] == pytest.approx(-0.5)


def test_mismatch_two_bus_flat_start():
    dp, dq = bus_mismatch(two_bus(), [1.0, 1.0], [0.0, 0.0])
    assert dp[1] == pytest.approx(-0.5, abs=1e-15)
    assert dq[1] == pytest.approx(-0.1, abs=1e-15)


def test_line_flow_zero_angle_symmetric():
    p_lm, q_lm, p_ml, q_ml = line_flow(0.7, -3.0, 0.04, 1.0, 1.0, 0.2, 0.2)
    assert p_lm == pytest.approx(0.0, abs=1e-15) and p_ml == pytest.approx(0.0, abs=1e-15)
    assert q_lm == pytest.approx(-0.02) and q_ml == pytest.approx(-0.02)


def test_line_flow_lossless_angle():
    p_lm, _, p_ml, _ = line_flow(0.0, -10.0, 0.0, 1.0, 1.0, 0.1, 0.0)
    # 10 sin(0.1)
    assert p_lm == pytest.approx(0.99833, abs=5e-6)
    assert p_ml == pytest.approx(-0.99833, abs=5e-6)
    assert p_lm + p_ml == 0.0


def test_line_flow_resistive_loss():
    p_lm, _, p_ml, _ = line_flow(1.0, -5.0, 0.0, 1.0, 0.95, 0.0, 0.0)
    assert p_lm == pytest.approx(0.05, abs=1e-14)
    assert p_ml == pytest.approx(-0.0475, abs=1e-14)
    assert p_lm + p_ml == pytest.approx(0.0025, abs=1e-14)


def test_line_flow_matches_complex_terminal_power(rng):
    for _ in range(200):
        r, x, bc = rng.uniform(0, 0.1), rng.uniform(0.01, 0.5), rng.uniform(0, 0.2)
        tap = rng.choice([1.0, rng.uniform(0.9, 1.1)])
        vm = rng.uniform(0.85, 1.15, 2)
        va = rng.uniform(-0.5, 0.5, 2)
        y = ybus(2, [(0, 1, r, x, bc, tap)])
        v = vm * np.exp(1j * va)
        s_lm = v[0] * np.conj(y[0] @ v)
        s_ml = v[1] * np.conj(y[1] @ v)
        g, b = r / (r * r + x * x), -x / (r * r + x * x)
        got = line_flow(g, b, bc, vm[0], vm[1], va[0], va[1], tap)
        want = (s_lm.real, s_lm.imag, s_ml.real, s_ml.imag)
        assert np.allclose(got, want, rtol=0, atol=1e-12)


def test_flat_profile_converges_immediately():
    net = PowerNetwork.from_records(
        [Bus(1, BusKind.SLACK), Bus(2), Bus(3)],
        [Branch(1, 2, 0.01, 0.1), Branch(2, 3, 0.01, 0.1)],
        [Generator(1, 0.0)],
        [Load(2, 0.0, 0.0)],
    )
    sol = solve(net)
    assert sol.converged and sol.iterations <= 1
    assert np.allclose(sol.v_mag, 1.0) and np.allclose(sol.v_ang, 0.0)


def test_two_bus_matches_brute_force():
    sol = solve(two_bus())
    (v2, th2), resid = solve_two_bus(0.5, 0.1, 0.1)
    assert resid < 1e-20
    assert sol.converged
    assert sol.v_mag[1] == pytest.approx(v2, abs=1e-6)
    assert sol.v_ang[1] == pytest.approx(th2, abs=1e-6)
    assert sol.v_ang[0] == 0.0


def test_two_bus_beyond_nose_point_does_not_converge():
    p_max = two_bus_max_load(0.1, 0.2)
    assert p_max == pytest.approx(4.0990195, abs=1e-6)
    ok = solve(two_bus(p_mw=100 * p_max * 0.98, q_mvar=100 * p_max * 0.98 * 0.2))
    assert ok.converged
    bad = solve(two_bus(p_mw=100 * p_max * 1.05, q_mvar=100 * p_max * 1.05 * 0.2))
    assert not bad.converged
    # brute force agrees that no (V2, theta2) balances the bus
    _, resid = solve_two_bus(p_max * 1.05, p_max * 1.05 * 0.2, 0.1)
    assert resid > 1e-4


def test_singular_or_diverging_never_raises():
    sol = solve(two_bus(p_mw=1e6, q_mvar=0.0), SolverOptions(max_iter=50))
    assert not sol.converged


@pytest.mark.parametrize("seed", range(10))
def test_jacobian_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    net = random_island(rng, int(rng.integers(2, 9)))
    model = IslandModel(net)
    vm = rng.uniform(0.9, 1.1, model.n)
    va = rng.uniform(-0.3, 0.3, model.n)
    npvpq = len(model.pvpq)

    def resid(xvec):
        a, m = va.copy(), vm.copy()
        a[model.pvpq] = xvec[:npvpq]
        m[model.pq] = xvec[npvpq:]
        return model.residual(m, a)

    x0 = np.concatenate([va[model.pvpq], vm[model.pq]])
    jac = model.jacobian(vm, va)
    fd = fd_jacobian(resid, x0)
    assert np.max(np.abs(jac - fd)) <= 1e-6 * np.max(np.abs(fd))


@pytest.mark.parametrize("seed", range(10))
def test_converged_solutions_satisfy_balance(seed):
    rng = np.random.default_rng(100 + seed)
    net = random_island(rng, int(rng.integers(2, 9)))
    sol = solve(net)
    if not sol.converged:
        pytest.skip("random island has no solution from flat start")
    model = IslandModel(net)
    dp, dq = model.mismatch(sol.v_mag, sol.v_ang)
    assert np.max(np.abs(dp[model.pvpq])) <= 1e-8
    assert np.max(np.abs(dq[model.pq])) <= 1e-8
    # independent complex-power check of the same state
    s = complex_power(model.ybus(), sol.v_mag, sol.v_ang)
    assert np.allclose(s.real[model.pvpq], model.p_spec[model.pvpq], atol=1e-8)
    # losses with nonnegative series conductance
    assert np.all(sol.losses >= -1e-12)
    gen = sol.p_injection.sum()
    load = model.p_load.sum()
    shunt = np.sum(model.g_sh * sol.v_mag**2)
    assert gen == pytest.approx(load + sol.losses.sum() + shunt, abs=1e-6)


def test_lossless_lines_antisymmetric():
    net = load_case("case30").copy()
    net.br_g[:] = 0.0
    net.br_bc[:] = 0.0
    sol = solve(net)
    assert sol.converged
    assert np.max(np.abs(sol.p_from + sol.p_to)) < 1e-12


@pytest.mark.parametrize("flows,rating,expected", [
    ((0.5, 0.0, -0.5, 0.0), 100.0, 50.0),
    ((0.6, 0.0, -0.62, 0.0), 60.0, 103.333333333),
    ((0.0, 0.0, 0.0, 0.0), 60.0, 0.0),
])
def test_branch_loading_percent(flows, rating, expected):
    assert branch_loading_percent(*flows, rating, 100.0) == pytest.approx(expected)


def test_branch_loading_rejects_nonpositive_rating():
    with pytest.raises(ValueError):
        branch_loading_percent(0.1, 0.0, 0.1, 0.0, 0.0, 100.0)


def test_no_slack_is_rejected():
    net = two_bus()
    net.bus_kind[0] = BusKind.PQ
    with pytest.raises(ValueError, match="slack"):
        solve(net)
