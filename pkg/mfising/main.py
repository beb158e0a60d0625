"""
Command-line entry point.

Assembles the subcommand groups and maps failures to exit codes:
0 success or PASS, 1 usage error, 2 validation error, 3 acceptance FAIL.
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

import mfising
from mfising.cli import experiments, matrix, model
from mfising.core.config import settings
from mfising.core.exceptions import MfIsingError
from mfising.services.experiments import format_validation_error


logger = logging.getLogger(__name__)

EXIT_USAGE = 1
EXIT_INVALID = 2


class ArgumentParser(argparse.ArgumentParser):
    """Usage errors exit with 1 so that 2 stays reserved for invalid inputs."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = ArgumentParser(prog=settings.PROJECT_NAME, description="Mean-field Ising fluctuation toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {mfising.__version__}")
    parser.add_argument("--seed", type=int, help="global seed overriding config and default seeds")
    parser.add_argument("--threads", type=int, help=f"worker threads (default {settings.THREADS})")
    parser.add_argument("--output", type=Path, help="output directory")
    parser.add_argument("--format", choices=["csv", "json"], default="csv", help="table format")
    parser.add_argument("--log-level", help=f"logging level (default {settings.LOG_LEVEL})")

    subparsers = parser.add_subparsers(dest="command", metavar="command", required=True)
    matrix.register(subparsers)
    model.register(subparsers)
    experiments.register(subparsers)
    return parser


def configure_logging(level: Optional[str] = None) -> None:
    logging.basicConfig(
        level=(level or settings.LOG_LEVEL).upper(),
        format=settings.LOG_FORMAT,
        stream=sys.stderr,
    )


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_USAGE
    if args.threads is not None and args.threads < 1:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: --threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE

    configure_logging(args.log_level)
    threads = settings.THREADS
    if args.threads is not None:
        settings.THREADS = args.threads
    try:
        return args.handler(args)
    except ValidationError as e:
        print(format_validation_error(e), file=sys.stderr)
        return EXIT_INVALID
    except (MfIsingError, OSError) as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    finally:
        settings.THREADS = threads


if __name__ == "__main__":
    sys.exit(main())
