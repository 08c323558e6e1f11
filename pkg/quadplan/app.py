"""Command-line application."""

import argparse
import logging
import sys
from pathlib import Path

from quadplan.api.commands import COMMANDS
from quadplan.config import apply_overrides, load_config
from quadplan.errors import QuadPlanError

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(levelname)s %(name)s: %(message)s"


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="configuration file (defaults: Phantom 2 mission)")
    common.add_argument("--wind", choices=("on", "off"), help="override wind.enabled")
    common.add_argument("--grid", metavar="N", help="override grid.n_intervals")
    common.add_argument("--tol", metavar="X", help="override solver.eq_tol and solver.ineq_tol")
    common.add_argument("--out", metavar="DIR", help="override outputs.directory")
    common.add_argument("--seedless", action="store_true",
                        help="accepted for compatibility; every run is deterministic")
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging")

    parser = argparse.ArgumentParser(prog="quadplan", description="Minimum-energy quadrotor trajectory planning")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("plan", parents=[common], help="solve the minimum-energy trajectory")
    sub.add_parser("simulate", parents=[common], help="fly the baseline tracking controller")
    sub.add_parser("compare", parents=[common], help="plan, fly the baseline and compare energy")
    sub.add_parser("wind-preview", parents=[common], help="sample the wind model")
    return parser


def configure_logging(verbose: bool) -> None:
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO,
                        format=LOG_FORMAT, stream=sys.stderr, force=True)


def cli_overrides(args: argparse.Namespace) -> dict:
    overrides = {}
    if args.wind is not None:
        overrides["wind.enabled"] = args.wind
    if args.grid is not None:
        overrides["grid.n_intervals"] = args.grid
    if args.tol is not None:
        overrides["solver.eq_tol"] = args.tol
        overrides["solver.ineq_tol"] = args.tol
    if args.out is not None:
        overrides["outputs.directory"] = args.out
    return overrides


def cli_main(argv=None) -> int:
    """Run one subcommand and return the process exit code.

    0 on success, 2 on configuration errors, 3 when the solver does not
    converge, 4 when a result file cannot be written.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    configure_logging(args.verbose)

    try:
        cfg = apply_overrides(load_config(args.config), cli_overrides(args))
        return COMMANDS[args.command](cfg, Path(cfg.outputs.directory))
    except QuadPlanError as exc:
        logger.error("%s", exc)
        return exc.exit_code
