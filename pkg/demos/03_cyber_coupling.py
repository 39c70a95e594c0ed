# # Coupling a separate communication network
#
# A realistic cyber layer need not copy the grid. Here the 118-bus system
# is paired with a 118-node communication graph whose nodes sit near, but
# not on, the substations. Each bus is wired to a cyber node by the
# bijection with the smallest total cable length.
#
# The fixture files come from tests/fixtures/make_fixtures.py.

from pathlib import Path

import numpy as np

from cpps_cascade import build_cyber_topology, load_case, prepare_network, run_cascade
from cpps_cascade.cyber import assignment_cost
from cpps_cascade.network import read_coordinates

FIX = Path(__file__).resolve().parent.parent / "tests" / "fixtures"

net = prepare_network(load_case("case118"))
cyber = build_cyber_topology(
    ("file", FIX / "case118_cyber.txt"), net,
    cyber_coords=FIX / "case118_cyber_xy.txt", power_coords=FIX / "case118_xy.txt",
)
print(f"cyber layer: {cyber.n_nodes} nodes, {len(cyber.edges)} links")


# ## How good is the assignment?
#
# Compare the optimal wiring with naive identity wiring (bus k to node k).

cxy = read_coordinates(FIX / "case118_cyber_xy.txt")
pxy = read_coordinates(FIX / "case118_xy.txt")
c = np.array([cxy[i] for i in range(cyber.n_nodes)])
p = np.array([pxy[int(b)] for b in net.bus_id])
print(f"total cable length: optimal {assignment_cost(c, p, cyber.coupling):.1f}, "
      f"identity {assignment_cost(c, p, np.arange(len(p))):.1f}")


# ## Same attack, with and without the cyber layer

rng = np.random.default_rng(5)
for trial in range(5):
    attack = sorted(rng.choice(net.bus_id, 2, replace=False).tolist())
    alone = run_cascade(net, None, attack_buses=attack, record=False)
    coupled = run_cascade(net, cyber, attack_buses=attack, record=False)
    print(f"  attack {attack}: power only {alone.state.power.n_live_buses:3d} buses left, "
          f"coupled {coupled.state.power.n_live_buses:3d} left "
          f"in {coupled.iterations} iteration(s)")
