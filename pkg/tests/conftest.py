import sys
from pathlib import Path

import numpy as np
import pytest

from cpps_cascade.network import Branch, Bus, BusKind, Generator, Load, PowerNetwork

sys.path.insert(0, str(Path(__file__).parent))

FIXTURES = Path(__file__).parent / "fixtures"

TWO_BUS_CASE = """\
function mpc = two_bus
mpc.version = '2';
mpc.baseMVA = 100;
mpc.bus = [
	1	3	0	0	0	0	1	1	0	135	1	1.1	0.9;
	2	1	50	10	0	0	1	1	0	135	1	1.1	0.9;
];
mpc.gen = [
	1	0	0	300	-300	1	100	1	500	0;
];
mpc.branch = [
	1	2	0	0.1	0	0	0	0	0	0	1	-360	360;
];
"""


def two_bus(p_mw=50.0, q_mvar=10.0, p_max=500.0, x=0.1, r=0.0, rating=0.0):
    return PowerNetwork.from_records(
        [Bus(1, BusKind.SLACK), Bus(2)],
        [Branch(1, 2, r, x, rating=rating)],
        [Generator(1, 0.0, p_max=p_max)],
        [Load(2, p_mw, q_mvar)],
    )


def two_area(b_has_gen=True):
    """Buses 1-2 (area A) and 3-4 (area B) joined by the single tie 2-3 (branch 1)."""
    buses = [Bus(1, BusKind.SLACK), Bus(2), Bus(3, BusKind.PV if b_has_gen else BusKind.PQ), Bus(4)]
    branches = [
        Branch(1, 2, 0.01, 0.1),
        Branch(2, 3, 0.01, 0.1),
        Branch(3, 4, 0.01, 0.1),
    ]
    gens = [Generator(1, 60.0, p_max=200.0)]
    if b_has_gen:
        gens.append(Generator(3, 40.0, p_max=80.0))
    loads = [Load(2, 40.0, 10.0), Load(4, 30.0, 5.0)]
    return PowerNetwork.from_records(buses, branches, gens, loads)


def detour_network():
    """Four buses where losing branch 0 overloads exactly branch 3.

    Bus 1 feeds bus 2 over branch 0 (x=0.1), branch 3 (x=0.2) and the
    two-hop path 1-3-2 (branches 1, 2). Bus 4 hangs off bus 2.
    """
    buses = [Bus(1, BusKind.SLACK), Bus(2), Bus(3), Bus(4)]
    branches = [
        Branch(1, 2, 0.0, 0.1, rating=200.0),
        Branch(1, 3, 0.0, 0.1, rating=200.0),
        Branch(3, 2, 0.0, 0.1, rating=200.0),
        Branch(1, 2, 0.0, 0.2, rating=40.0),
        Branch(2, 4, 0.0, 0.05, rating=200.0),
    ]
    return PowerNetwork.from_records(
        buses, branches, [Generator(1, 0.0, p_max=500.0)], [Load(2, 90.0, 0.0), Load(4, 10.0, 0.0)]
    )


def random_island(rng, n):
    """Connected random network with taps, shunts and charging; bus 0 is the slack."""
    buses = [Bus(1, BusKind.SLACK, g_sh=rng.uniform(0, 0.05), b_sh=rng.uniform(-0.1, 0.1))]
    for i in range(2, n + 1):
        kind = BusKind.PV if rng.random() < 0.3 else BusKind.PQ
        buses.append(Bus(i, kind, g_sh=rng.uniform(0, 0.05), b_sh=rng.uniform(-0.1, 0.1)))
    branches = []
    for i in range(2, n + 1):
        j = int(rng.integers(1, i))
        branches.append(_rand_branch(rng, j, i))
    for _ in range(int(rng.integers(0, n))):
        a, b = rng.choice(np.arange(1, n + 1), 2, replace=False)
        branches.append(_rand_branch(rng, int(a), int(b)))
    gens = [Generator(b.id, rng.uniform(0, 80), rng.uniform(-20, 20), 200.0, v_set=rng.uniform(0.97, 1.05))
            for b in buses if b.kind != BusKind.PQ]
    loads = [Load(b.id, rng.uniform(0, 60), rng.uniform(-10, 30)) for b in buses]
    return PowerNetwork.from_records(buses, branches, gens, loads)


def _rand_branch(rng, a, b):
    tap = rng.uniform(0.95, 1.05) if rng.random() < 0.3 else 1.0
    shift = rng.uniform(-0.1, 0.1) if rng.random() < 0.2 else 0.0
    return Branch(a, b, rng.uniform(0.0, 0.05), rng.uniform(0.05, 0.3), rng.uniform(0, 0.1),
                  tap=tap, shift=shift)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# --- acceptance reporting --------------------------------------------------

ACCEPTANCE_LINES = []


def report(criterion, passed, detail):
    ACCEPTANCE_LINES.append(f"[{'PASS' if passed else 'FAIL'}] criterion {criterion}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
