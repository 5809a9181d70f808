"""Command-line entry point: ``softcompose <command> --config <path> [options]``.

Exit status is 0 on success, 1 when an invariant or certificate check fails,
and 2 for usage or config errors. ``--config fixture:<name>`` loads one of
the configs shipped with the package.
"""

from __future__ import annotations

import argparse
import sys

from . import __version__, harness
from .mdp import InvalidMdpError
from .solver import ConvergenceError

DESCRIPTIONS = {
    "solve": "solve every task with soft Q-iteration and write Q, V, policy and diagnostics",
    "compose": "write the mean Q-function and Boltzmann policy of each subset",
    "certify": "check the composition bounds for every two-task subset and seed",
    "bench": "roll out direct and merged soft/hard policies on a gridworld",
    "plotdata": "write residual-per-iteration traces as CSV",
    "verify": "cross-check the solvers against the brute-force oracles",
    "gen": "write the configured MDP and rewards to JSON files",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="softcompose", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="config file, or fixture:<name>")
    common.add_argument("--out", help="output directory (default: the config's output.dir)")
    common.add_argument("--seed-override", type=int, help="run this single seed instead")
    common.add_argument("--tol", type=float, help="override the config's tolerance")
    common.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
    for name, text in DESCRIPTIONS.items():
        sub.add_parser(name, parents=[common], help=text, description=text)
    return parser


def _resolve_config(arg: str):
    if arg.startswith("fixture:"):
        return harness.fixture_path(arg.split(":", 1)[1])
    return arg


def _report(command: str, summary: dict):
    if command == "certify":
        c = summary["counts"]
        print(f"certify: {c['valid']} valid, {c['vacuous']} vacuous, {c['failed']} failed")
        for e in summary["certificates"]:
            if e["status"] == "failed":
                print(f"  FAILED seed {e['seed']} {e['subset_label']}: min slack {e['min_slack']}")
    elif command == "verify":
        c = summary["counts"]
        print(f"verify: {c['pass']} passed, {c['fail']} failed, {c['skipped']} skipped")
        for chk in summary["checks"]:
            if chk["status"] == "fail":
                print(f"  FAILED seed {chk['seed']} {chk['check']}: "
                      f"error {chk['max_error']:.3e} > {chk['limit']:.3e}")
    elif command == "bench":
        for row in summary["rows"]:
            if row["metric_name"] in ("final_distance", "additional_bellman_sweeps"):
                print(f"{row['task_label']:>20} {row['method']:>12} {row['metric_name']:>26} "
                      f"{row['mean']:10.4f} +/- {row['std']:.4f} (n={row['n']})")
    elif command == "solve":
        for v in summary["violations"]:
            print(f"  VIOLATION {v}")
        print(f"solve: {len(summary['violations'])} violation(s)")
    else:
        print(f"{command}: done")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.jobs < 1:
        parser.error("--jobs must be >= 1")
    if args.tol is not None and not args.tol > 0:
        parser.error("--tol must be > 0")
    try:
        config = harness.load_config(_resolve_config(args.config), args.seed_override, args.tol)
        status, summary = harness.run(args.command, config, args.out, args.jobs)
    except (harness.ConfigError, InvalidMdpError) as exc:
        print(f"softcompose {args.command}: {exc}", file=sys.stderr)
        return harness.EXIT_USAGE
    except OSError as exc:
        print(f"softcompose {args.command}: {exc}", file=sys.stderr)
        return harness.EXIT_USAGE
    except ConvergenceError as exc:
        print(f"softcompose {args.command}: solver failed: {exc}", file=sys.stderr)
        return harness.EXIT_VIOLATION
    _report(args.command, summary)
    return status


if __name__ == "__main__":
    sys.exit(main())
