# # AC power flow on the bundled test systems
#
# The package ships three MATPOWER cases. Here we load the 30-bus one,
# solve it with Newton-Raphson from a flat start, and look at the result
# through a few different lenses.

import numpy as np

from cpps_cascade import load_case, solve
from cpps_cascade.powerflow import IslandModel, solution_loading

net = load_case("case30")
print(f"{net.n_bus} buses, {net.n_branch} branches, {len(net.gen_bus)} generators")
print(f"total demand {net.total_load() * net.base_mva:.1f} MW")


# ## Solve

sol = solve(net)
print(f"converged={sol.converged} after {sol.iterations} iterations, "
      f"max mismatch {sol.max_mismatch:.2e} p.u.")


# Voltages come back in per-unit and radians. These are the five weakest
# buses.

order = np.argsort(sol.v_mag)[:5]
for pos in order:
    print(f"  bus {net.bus_id[pos]:3d}: |V| = {sol.v_mag[pos]:.4f}  "
          f"angle = {np.degrees(sol.v_ang[pos]):7.2f} deg")


# ## Where the power goes
#
# Generation has to cover the load, the series losses of every branch and
# whatever the bus shunts absorb.

model = IslandModel(net)
gen = sol.p_injection.sum() * net.base_mva
load = model.p_load.sum() * net.base_mva
losses = sol.losses.sum() * net.base_mva
shunt = np.sum(model.g_sh * sol.v_mag**2) * net.base_mva
print(f"generation {gen:.3f} MW = load {load:.3f} + losses {losses:.3f} + shunts {shunt:.3f}")


# ## Branch loading
#
# case30 carries real thermal ratings, so we can rank branches by how close
# they run to their limit in the intact state. One of them is already over
# its rating in the published data; prepare_network lifts such ratings to
# the base-case flow so an unattacked grid does not trip on its own.

loading = solution_loading(net, sol)
rated = net.br_rating[sol.branches] > 0
top = np.argsort(np.where(rated, loading, -1))[::-1][:5]
for k in top:
    b = sol.branches[k]
    print(f"  branch {b:2d} ({net.bus_id[net.br_from[b]]}-{net.bus_id[net.br_to[b]]}): "
          f"{loading[k]:6.1f} % of {net.br_rating[b]:.0f} MVA")


# ## A harder system
#
# The 300-bus case has transformer taps, negative loads and a series
# capacitor. It still converges in a handful of iterations.

big = load_case("case300")
sol300 = solve(big)
print(f"case300: converged={sol300.converged}, iterations={sol300.iterations}, "
      f"losses {sol300.losses.sum() * big.base_mva:.1f} MW")
