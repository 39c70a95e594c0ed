"""Monte-Carlo blackout-probability sweeps over random attacks."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .cascade import prepare_network, run_cascade
from .cyber import build_cyber_topology
from .network import load_case
from .powerflow import SolverOptions

Z95 = 1.959963984540054


def sample_attack(rng, k, target, network):
    """Uniform sample of ``k`` live buses (returned as bus ids) or branches (row ids)."""
    if target == "buses":
        population = network.bus_id[network.bus_in_service]
    elif target == "branches":
        population = np.flatnonzero(network.branch_live)
    else:
        raise ValueError(f"target must be 'buses' or 'branches', not {target!r}")
    if not 0 <= k <= len(population):
        raise ValueError(f"cannot draw {k} of {len(population)} {target}")
    picked = rng.choice(population, size=k, replace=False)
    return sorted(int(x) for x in picked)


def run_rng(seed, k, run):
    """Independent stream for one run; depends only on (seed, k, run)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(k), int(run)]))


@dataclass
class SweepConfig:
    case: str = "case30"
    cyber: str = "none"
    target: str = "buses"
    k_values: tuple = tuple(range(1, 11))
    runs: int = 100
    seed: int = 0
    options: SolverOptions = field(default_factory=SolverOptions)
    alpha: float = 1.2
    floor: float = 5.0
    cyber_coords: str | None = None
    power_coords: str | None = None
    workers: int = 1

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError("runs must be at least 1")
        self.k_values = tuple(int(k) for k in self.k_values)


@dataclass
class SweepRow:
    k: int
    runs: int
    blackouts: int

    @property
    def probability(self):
        return self.blackouts / self.runs

    @property
    def ci95(self):
        p = self.probability
        return Z95 * math.sqrt(p * (1 - p) / self.runs)


@dataclass
class SweepResult:
    config: SweepConfig
    rows: list

    def probabilities(self):
        return np.array([r.probability for r in self.rows])

    def half_widths(self):
        return np.array([r.ci95 for r in self.rows])

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "runs", "blackouts", "probability", "ci95"])
        for r in self.rows:
            w.writerow([r.k, r.runs, r.blackouts, f"{r.probability:.6f}", f"{r.ci95:.6f}"])
        return buf.getvalue()


# one prepared (network, cyber) pair per process
_CONTEXT = {}


def _context(config):
    key = (config.case, config.cyber, config.alpha, config.floor, config.options,
           config.cyber_coords, config.power_coords)
    if key not in _CONTEXT:
        net = prepare_network(load_case(config.case), config.alpha, config.floor, config.options)
        cyber = build_cyber_topology(config.cyber, net, config.cyber_coords, config.power_coords)
        _CONTEXT.clear()
        _CONTEXT[key] = (net, cyber)
    return _CONTEXT[key]


def run_one(config, k, run):
    """Blackout flag of run ``run`` at attack size ``k``."""
    net, cyber = _context(config)
    attack = sample_attack(run_rng(config.seed, k, run), k, config.target, net)
    if config.target == "buses":
        result = run_cascade(net, cyber, attack, (), config.options, record=False)
    else:
        result = run_cascade(net, cyber, (), attack, config.options, record=False)
    return result.blackout


def _run_chunk(args):
    config, jobs = args
    return [run_one(config, k, run) for k, run in jobs]


def run_sweep(config):
    """Run ``config.runs`` cascades per attack size and count blackouts.

    Results do not depend on ``config.workers``: every run draws from its
    own seed stream and aggregation is a plain count.
    """
    net, _ = _context(config)
    population = net.n_live_buses if config.target == "buses" else net.n_live_branches
    for k in config.k_values:
        if not 0 <= k <= population:
            raise ValueError(f"attack size {k} exceeds the {population} available {config.target}")
    jobs = [(k, run) for k in config.k_values for run in range(config.runs)]
    if config.workers > 1:
        n = config.workers * 4
        chunks = [jobs[i::n] for i in range(n)]
        with ProcessPoolExecutor(config.workers) as pool:
            parts = list(pool.map(_run_chunk, [(config, c) for c in chunks]))
        flags = {}
        for chunk, out in zip(chunks, parts):
            flags.update(zip(chunk, out))
    else:
        flags = {job: run_one(config, *job) for job in jobs}
    rows = [SweepRow(k, config.runs, sum(flags[(k, r)] for r in range(config.runs)))
            for k in config.k_values]
    return SweepResult(config, rows)


def smoothed(values, window=3):
    """Centered moving average; the window shrinks at the ends."""
    values = np.asarray(values, dtype=float)
    half = window // 2
    return np.array([values[max(0, i - half): i + half + 1].mean() for i in range(len(values))])


def monotone_within(probabilities, half_widths, window=3):
    """Whether the smoothed curve never drops by more than a point's 95 % half-width."""
    s = smoothed(probabilities, window)
    hw = np.asarray(half_widths, dtype=float)
    return bool(np.all(s[1:] + hw[1:] >= s[:-1] - 1e-12))
