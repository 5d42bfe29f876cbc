"""
Command-line front door.

    python cli.py simulate --config configs/linear_damped.json --out runs/demo
    python cli.py verify --set verify.monotonicity_pairs=1000
    python cli.py sweep --config configs/dissipative_cubic.json --workers 3

Exit codes: 0 success, 1 usage or config error, 2 numerical failure.
"""

import argparse
import logging
import sys
from typing import List, Optional

from app.core.config import settings
from app.core.errors import NLWaveError
from app.core.log import configure_logging
from app.services.run_store import RunStore
from app.services.runner import (
    CommandResult,
    execute_pair,
    execute_resolvent,
    execute_simulate,
    execute_sweep,
    execute_verify,
)
from app.utils.config_loader import load_config

logger = logging.getLogger(__name__)

SUBCOMMANDS = ("simulate", "verify", "sweep", "pair", "resolvent")
MAX_SEED = 2 ** 64


class UsageError(Exception):
    def __init__(self, message: str, usage: str):
        super().__init__(message)
        self.message = message
        self.usage = usage


class CommandParser(argparse.ArgumentParser):
    """ArgumentParser that reports usage errors instead of exiting with status 2."""

    def error(self, message):
        raise UsageError(message, self.format_usage())


def _seed(value: str) -> int:
    seed = int(value)
    if not 0 <= seed < MAX_SEED:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {value}")
    return seed


def _workers(value: str) -> int:
    workers = int(value)
    if workers < 1:
        raise argparse.ArgumentTypeError(f"workers must be at least 1, got {value}")
    return workers


def build_parser() -> CommandParser:
    common = CommandParser(add_help=False)
    common.add_argument("--config", help="experiment config (JSON); defaults apply when omitted")
    common.add_argument("--out", help="output directory (default: $NLWAVE_OUT/<command>-<digest>)")
    common.add_argument("--seed", type=_seed, default=0, help="seed for every random draw")
    common.add_argument("--workers", type=_workers, default=settings.NLWAVE_WORKERS,
                        help="parallel trajectories in sweep and pair")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VAL",
                        help="dotted-path config override, repeatable (e.g. physics.p=3)")
    common.add_argument("--log-level", default=settings.NLWAVE_LOG_LEVEL, help="logging level")

    parser = CommandParser(prog="nlwave", description="Nonlocal damped wave equation lab")
    subparsers = parser.add_subparsers(dest="subcommand", metavar="{" + ",".join(SUBCOMMANDS) + "}")
    subparsers.add_parser("simulate", parents=[common], help="integrate one trajectory and persist records")
    subparsers.add_parser("verify", parents=[common], help="run the property suite")
    subparsers.add_parser("sweep", parents=[common], help="estimate the absorbing radius")
    subparsers.add_parser("pair", parents=[common], help="pair contraction experiment")
    subparsers.add_parser("resolvent", parents=[common], help="solve the stationary resolvent problem")
    return parser


# -------------------- Output --------------------

def _print_header(result: CommandResult) -> None:
    manifest = result.manifest
    print(f"{manifest.subcommand}: status={manifest.status} digest={manifest.config_digest[:12]} out={result.out_dir}")
    if manifest.message:
        print(f"  {manifest.message}")


def _print_verify(result: CommandResult) -> None:
    checks = result.report["checks"]
    width = max(len(check["name"]) for check in checks)
    print(f"{'check'.ljust(width)}  result  value")
    for check in checks:
        status = "PASS" if check["passed"] else "FAIL"
        value = "" if check["value"] is None else f"{check['value']:.6g}"
        print(f"{check['name'].ljust(width)}  {status:6s}  {value}")
    passed = sum(1 for check in checks if check["passed"])
    print(f"RESULTS: {passed}/{len(checks)} checks passed")


def _print_sweep(result: CommandResult) -> None:
    report = result.report
    print(f"{'scale':>10}  {'initial':>12}  {'tail sup':>12}  settled")
    for trajectory in report["trajectories"]:
        tail = trajectory["tail_sup"]
        tail_text = "failed" if tail is None else f"{tail:.6g}"
        print(f"{trajectory['scale']:>10g}  {trajectory['initial_norm']:>12.6g}  {tail_text:>12}  {trajectory['stabilized']}")
    if report["conclusive"]:
        print(f"absorbing radius {report['radius']:.6g}, spread {report['spread']:.4g}")


def _print_pair(result: CommandResult) -> None:
    report = result.report
    for T, summary, rate in zip(report["T_list"], report["summary"], report["summary_rate"]):
        if summary is None:
            print(f"T = {T:g}: min pair energy n/a")
        else:
            print(f"T = {T:g}: min pair energy {summary:.6g} (rate {rate:.3g})")


def _print_resolvent(result: CommandResult) -> None:
    report = result.report
    print(f"sigma = {report['sigma']!r}")
    print(f"residual = {report['residual']!r} (tol {report['tol']:g})")


def _print_simulate(result: CommandResult) -> None:
    report = result.report
    print(f"steps = {report['steps']}, final energy = {report['final_energy']!r}")
    if report["growth_rate"] is not None:
        print(f"energy growth rate C = {report['growth_rate']:.6g}")
    if report["final_pair_energy"] is not None:
        print(f"final pair energy = {report['final_pair_energy']:.6g}")


PRINTERS = {
    "simulate": _print_simulate,
    "verify": _print_verify,
    "sweep": _print_sweep,
    "pair": _print_pair,
    "resolvent": _print_resolvent,
}


# -------------------- Commands --------------------

def _load(invocation: argparse.Namespace):
    return load_config(invocation.config, invocation.overrides)


def _finish(result: CommandResult) -> int:
    _print_header(result)
    PRINTERS[result.manifest.subcommand](result)
    return result.exit_code


def _store() -> RunStore:
    return RunStore(settings.NLWAVE_OUT)


def run_simulate(invocation: argparse.Namespace) -> int:
    return _finish(execute_simulate(_load(invocation), invocation.seed, invocation.out, _store()))


def run_verify(invocation: argparse.Namespace) -> int:
    return _finish(execute_verify(_load(invocation), invocation.seed, invocation.out, _store()))


def run_sweep(invocation: argparse.Namespace) -> int:
    return _finish(execute_sweep(_load(invocation), invocation.seed, invocation.out, invocation.workers, _store()))


def run_pair(invocation: argparse.Namespace) -> int:
    return _finish(execute_pair(_load(invocation), invocation.seed, invocation.out, invocation.workers, _store()))


def run_resolvent(invocation: argparse.Namespace) -> int:
    return _finish(execute_resolvent(_load(invocation), invocation.seed, invocation.out, _store()))


COMMANDS = {
    "simulate": run_simulate,
    "verify": run_verify,
    "sweep": run_sweep,
    "pair": run_pair,
    "resolvent": run_resolvent,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        invocation = parser.parse_args(argv)
        if invocation.subcommand is None:
            raise UsageError("a subcommand is required", parser.format_usage())
    except UsageError as e:
        sys.stderr.write(e.usage)
        sys.stderr.write(f"error: {e.message}\n")
        return 1

    try:
        configure_logging(invocation.log_level)
    except ValueError as e:
        sys.stderr.write(f"error: {e}\n")
        return 1

    try:
        return COMMANDS[invocation.subcommand](invocation)
    except NLWaveError as e:
        logger.error("%s failed: %s", invocation.subcommand, e.message)
        sys.stderr.write(f"error: {e.message}\n")
        if e.details:
            sys.stderr.write(f"details: {e.details}\n")
        return e.exit_code
