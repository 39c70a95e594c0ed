# # One cascade, phase by phase
#
# A cascade starts with a handful of attacked buses. Inside the power grid
# the loss splits the network into islands; each island sheds load until
# its power flow solves, then any branch pushed past its rating trips.
# Failures then hop to the communication network and back.

import json
import tempfile
from pathlib import Path

from cpps_cascade import load_case, mirror_topology, prepare_network, run_cascade

# Branches without a rating get one from the intact base-case flow.
net = prepare_network(load_case("case30"), alpha=1.2)
cyber = mirror_topology(net)

result = run_cascade(net, cyber, attack_buses=[6, 10, 27])
summary = result.summary()
print(f"blackout={summary['blackout']} after {summary['iterations']} iteration(s)")
print(f"served {summary['served_load_mw']:.1f} MW of {summary['initial_load_mw']:.1f} MW "
      f"(shed {summary['shed_load_mw']:.1f}, lost {summary['lost_load_mw']:.1f})")


# ## The phase log
#
# Every phase leaves a snapshot behind. Power-side changes only happen in
# phases A and D, cyber-side changes only in B and C.

for snap in result.state.phase_log:
    live_buses = int((snap.bus_island >= 0).sum())
    islands = len(snap.island_served_mw)
    live_nodes = int((snap.node_component >= 0).sum())
    print(f"  iter {snap.iteration} {snap.phase:>7}: {live_buses:2d} buses in {islands} island(s), "
          f"{live_nodes:2d} cyber nodes, {snap.served_load_mw:6.1f} MW served")


# ## Overload trips
#
# Each entry is (iteration, branch id). Branches listed here were not
# attacked; they went down because flow rerouted onto them.

for it, b in result.state.overload_trips:
    print(f"  iteration {it}: branch {b} ({net.bus_id[net.br_from[b]]}-{net.bus_id[net.br_to[b]]})")


# ## Snapshot files
#
# The same documents the CLI writes. Every bus and cyber node carries an
# island id or "failed", which is all a plotting tool needs.

out = Path(tempfile.mkdtemp(prefix="cascade_"))
for seq, snap in enumerate(result.state.phase_log):
    doc = snap.to_dict(net, cyber)
    (out / f"{seq:03d}_{snap.iteration:02d}{snap.phase}.json").write_text(json.dumps(doc, indent=1))
print(f"wrote {len(result.state.phase_log)} snapshots to {out}")
