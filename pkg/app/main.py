"""
Batch command-line entry point for the CSDTC simulator.

    python -m app.main <subcommand> [--config PATH] [--out DIR] [--threads N] [--seed N]

Each subcommand writes its artifacts under the output directory and prints
a JSON summary; failures print a JSON error document and exit nonzero.
"""
import argparse
import dataclasses
import json
import logging
import sys
from typing import Any, Dict, List, Optional, Sequence

from . import __version__
from .command_handler import CommandHandler
from .config import RunConfig, config, parse_cutoffs, run_config_loader
from .errors import SimulationError
from .utils import setup_logging

EXIT_OK = 0
EXIT_NUMERICS = 1
EXIT_INPUT = 2

DEFAULT_CONFIG_TEXT = "[meta]\nformat = 1\n"


def _cutoff_list(text: str):
    try:
        return parse_cutoffs(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="csdtc-sim",
        description="Flux-driven iSWAP simulator for a double-transmon-coupler device",
    )
    parser.add_argument("--version", action="version", version=f"csdtc-sim {__version__}")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH",
                        help="INI run configuration (defaults to the tabulated device)")
    common.add_argument("--out", metavar="DIR", help="Output directory")
    common.add_argument("--threads", type=int, metavar="N", help="Worker cap")
    common.add_argument("--seed", type=int, metavar="N", help="Seed for synthetic data")
    common.add_argument("--log-level", default=None,
                        choices=("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"))

    commands = parser.add_subparsers(dest="command", required=True, metavar="subcommand")
    spectrum = commands.add_parser("spectrum", parents=[common],
                                   help="Labeled spectrum and static ZZ versus flux")
    spectrum.add_argument("--cutoffs", type=_cutoff_list, metavar="N,N,...",
                          help="Charge cutoffs for a zero-flux convergence sweep "
                               "(overrides [simulation] convergence_cutoffs)")
    commands.add_parser("chevron", parents=[common],
                        help="Chevron maps and extracted iSWAP rates")
    commands.add_parser("gate", parents=[common],
                        help="Gate fidelity, leakage and ZZ for the configured pulse")
    commands.add_parser("optimize", parents=[common],
                        help="Optimize drive amplitude and frequency")
    commands.add_parser("zz", parents=[common],
                        help="Effective, averaged and dynamical ZZ versus amplitude")
    commands.add_parser("toy", parents=[common],
                        help="Toy-model rates against the semianalytic full model")
    rbfit = commands.add_parser("rbfit", parents=[common],
                                help="Fit RB decays and build the error budget")
    rbfit.add_argument("srb", help="Standard RB sequence fidelity CSV")
    rbfit.add_argument("irb", help="Interleaved RB sequence fidelity CSV")
    rbfit.add_argument("--srb-leakage", metavar="PATH",
                       help="Standard RB leakage-free probability CSV")
    rbfit.add_argument("--irb-leakage", metavar="PATH",
                       help="Interleaved RB leakage-free probability CSV")
    coherence = commands.add_parser("coherence", parents=[common],
                                    help="Coherence summary and echo flux-noise fit")
    coherence.add_argument("echo", nargs="*", help="Echo decay CSVs")
    return parser


def command_inputs(args: argparse.Namespace) -> List[str]:
    if args.command == "rbfit":
        leakage = [args.srb_leakage, args.irb_leakage]
        if any(leakage) and not all(leakage):
            raise ValueError("--srb-leakage and --irb-leakage must be given together")
        return [args.srb, args.irb] + (leakage if all(leakage) else [])
    if args.command == "coherence":
        return list(args.echo)
    return []


def load_run_config(args: argparse.Namespace) -> RunConfig:
    if args.config:
        run_config = run_config_loader.load(args.config, output_dir=args.out, seed=args.seed,
                                            threads=args.threads)
    else:
        run_config = run_config_loader.loads(DEFAULT_CONFIG_TEXT, output_dir=args.out,
                                             seed=args.seed, threads=args.threads)
    cutoffs = getattr(args, "cutoffs", None)
    if cutoffs:
        simulation = dataclasses.replace(run_config.simulation, convergence_cutoffs=cutoffs)
        run_config = dataclasses.replace(run_config, simulation=simulation)
    return run_config


def error_payload(error: Exception) -> Dict[str, Any]:
    if isinstance(error, SimulationError):
        return error.to_payload()
    return {"status": "error", "error_type": type(error).__name__,
            "message": str(error), "details": {}}


def exit_code_for(error: Exception) -> int:
    """Input problems (bad values, unreadable files) exit with 2, numerical failures with 1."""
    if isinstance(error, (ValueError, OSError)):
        return EXIT_INPUT
    return EXIT_NUMERICS


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse arguments, run one subcommand and print its JSON payload."""
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level or config.LOG_LEVEL)
    logger = logging.getLogger(__name__)

    try:
        if args.threads is not None and args.threads < 1:
            raise ValueError(f"--threads must be at least 1, got {args.threads}")
        config.validate()
        run_config = load_run_config(args)
        handler = CommandHandler(run_config)
        status, payload = handler.run(args.command, command_inputs(args))
    except (SimulationError, ValueError, OSError) as e:
        code = exit_code_for(e)
        logger.error(f"Command {args.command} aborted: {type(e).__name__}: {e}")
        print(json.dumps(error_payload(e), indent=2, sort_keys=True, default=str))
        return code

    print(json.dumps(payload, indent=2, sort_keys=True, default=str))
    return EXIT_OK if status == 0 else EXIT_NUMERICS


def main() -> None:
    """Main entry point."""
    sys.exit(run())


if __name__ == "__main__":
    main()
