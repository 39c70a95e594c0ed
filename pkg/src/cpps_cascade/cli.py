"""Command-line entry points: ``cpps-cascade run`` and ``cpps-cascade sweep``.

Exit codes: 0 normal termination, 2 input error, 3 abnormal termination
(the cascade hit its iteration safety cap). Log verbosity comes from the
``CPPS_CASCADE_LOG`` environment variable (e.g. ``DEBUG``).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .cascade import prepare_network, run_cascade
from .cyber import CyberTopologyError, build_cyber_topology
from .experiment import SweepConfig, run_sweep, sample_attack, run_rng
from .network import CaseParseError, load_case
from .powerflow import SolverOptions

EXIT_OK, EXIT_INPUT, EXIT_ABNORMAL = 0, 2, 3
log = logging.getLogger("cpps_cascade")


class InputError(Exception):
    pass


def _id_list(text):
    if not text:
        return []
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _cyber_mode(text):
    if text in ("none", "mirror") or text.startswith("file:"):
        return text
    raise argparse.ArgumentTypeError("cyber mode must be none, mirror or file:<path>")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def build_parser():
    p = _Parser(prog="cpps-cascade", description="Cascading failures in cyber-physical power grids")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    common = _Parser(add_help=False)
    common.add_argument("--case", required=True, help="MATPOWER case file or bundled case name")
    common.add_argument("--cyber", type=_cyber_mode, default="none", help="none | mirror | file:<edge list>")
    common.add_argument("--coords", help="power bus coordinates (bus_id x y)")
    common.add_argument("--cyber-coords", help="cyber node coordinates (node_id x y)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--alpha", type=float, default=1.2, help="rating margin for unrated branches")
    common.add_argument("--floor", type=float, default=5.0, help="minimum fallback rating, MVA")
    common.add_argument("--tol", type=float, default=1e-8, help="power-flow mismatch tolerance, p.u.")
    common.add_argument("--max-iter", type=int, default=20)

    run = sub.add_parser("run", parents=[common], help="run one cascade")
    run.add_argument("--attack-buses", type=_id_list, default=[], help="bus ids, e.g. 5,12")
    run.add_argument("--attack-branches", type=_id_list, default=[], help="branch row ids (0-based)")
    run.add_argument("--random-buses", type=int, default=0, help="add k random attacked buses (uses --seed)")
    run.add_argument("--random-branches", type=int, default=0, help="add k random attacked branches")
    run.add_argument("--snapshots", help="directory for per-phase snapshot files")
    run.add_argument("--summary", help="summary JSON path (default: stdout)")

    sw = sub.add_parser("sweep", parents=[common], help="Monte-Carlo blackout probabilities")
    sw.add_argument("--target", choices=("buses", "branches"), default="buses")
    sw.add_argument("--k-min", type=int, default=1)
    sw.add_argument("--k-max", type=int, default=10)
    sw.add_argument("--runs", type=int, default=100)
    sw.add_argument("--workers", type=int, default=1)
    sw.add_argument("--out", required=True, help="results CSV path")
    return p


def _load(args):
    try:
        if not Path(args.case).exists() and args.case not in ("case30", "case118", "case300"):
            raise InputError(f"case file not found: {args.case}")
        options = SolverOptions(tol=args.tol, max_iter=args.max_iter)
        net = prepare_network(load_case(args.case), args.alpha, args.floor, options)
        if args.cyber.startswith("file:") and not Path(args.cyber[5:]).exists():
            raise InputError(f"cyber edge list not found: {args.cyber[5:]}")
        cyber = build_cyber_topology(args.cyber, net, args.cyber_coords, args.coords)
    except (OSError, CaseParseError, CyberTopologyError, ValueError) as exc:
        raise InputError(str(exc)) from exc
    return net, cyber, options


def cmd_run(args):
    net, cyber, options = _load(args)
    buses, branches = list(args.attack_buses), list(args.attack_branches)
    rng = run_rng(args.seed, 0, 0)
    if args.random_buses:
        buses += sample_attack(rng, args.random_buses, "buses", net)
    if args.random_branches:
        branches += sample_attack(rng, args.random_branches, "branches", net)
    try:
        result = run_cascade(net, cyber, sorted(set(buses)), sorted(set(branches)), options)
    except KeyError as exc:
        raise InputError(str(exc.args[0])) from exc

    if args.snapshots:
        out = Path(args.snapshots)
        out.mkdir(parents=True, exist_ok=True)
        for seq, snap in enumerate(result.state.phase_log):
            doc = snap.to_dict(net, cyber)
            name = f"{seq:03d}_{snap.iteration:02d}{snap.phase}.json"
            (out / name).write_text(json.dumps(doc, indent=1))
    summary = result.summary()
    summary["attack_buses"] = sorted(set(buses))
    summary["attack_branches"] = sorted(set(branches))
    text = json.dumps(summary, indent=2)
    if args.summary:
        Path(args.summary).write_text(text + "\n")
    else:
        print(text)
    return EXIT_ABNORMAL if result.abnormal else EXIT_OK


def cmd_sweep(args):
    if args.k_min < 0 or args.k_max < args.k_min:
        raise InputError("need 0 <= k-min <= k-max")
    if args.runs < 1:
        raise InputError("--runs must be at least 1")
    _load(args)  # validate inputs up front
    config = SweepConfig(
        case=args.case, cyber=args.cyber, target=args.target,
        k_values=range(args.k_min, args.k_max + 1), runs=args.runs, seed=args.seed,
        options=SolverOptions(tol=args.tol, max_iter=args.max_iter), alpha=args.alpha,
        floor=args.floor, cyber_coords=args.cyber_coords, power_coords=args.coords,
        workers=args.workers,
    )
    try:
        result = run_sweep(config)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    Path(args.out).write_text(result.to_csv())
    return EXIT_OK


def main(argv=None):
    level = os.environ.get("CPPS_CASCADE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return cmd_run(args) if args.command == "run" else cmd_sweep(args)
    except InputError as exc:
        print(f"cpps-cascade: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
