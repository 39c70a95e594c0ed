"""Cascading-failure simulation for interdependent cyber-physical power grids."""

from .cascade import CascadeResult, CascadeState, prepare_network, run_cascade
from .cyber import (CyberNetwork, assign_coupling, build_cyber_topology, giant_component_prune,
                    mirror_topology)
from .experiment import SweepConfig, SweepResult, run_sweep, sample_attack
from .network import (Branch, Bus, BusKind, CaseParseError, Generator, Load, PowerNetwork,
                      branch_admittance, load_case, normalize_ratings, parse_case, serialize_case)
from .powerflow import PowerFlowSolution, SolverOptions, bus_mismatch, line_flow, solve

__version__ = "0.1.0"
