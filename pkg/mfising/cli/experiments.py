"""`run`, `reproduce` and `schema`: config-driven experiments."""
import argparse
import json
import logging
from pathlib import Path

from mfising.cli.deps import get_storage
from mfising.core.config import settings
from mfising.schemas.experiment import ExperimentConfig, ExperimentResult
from mfising.services import experiments


logger = logging.getLogger(__name__)

EXIT_FAIL = 3


def register(subparsers: argparse._SubParsersAction) -> None:
    run = subparsers.add_parser("run", help="run an experiment config")
    run.add_argument("config", type=Path)
    run.add_argument("--report", action="store_true", help="also render report.md")
    run.set_defaults(handler=run_config)

    reproduce = subparsers.add_parser("reproduce", help="run a canonical experiment with pinned seeds")
    reproduce.add_argument("name", choices=experiments.CANONICAL_NAMES)
    reproduce.set_defaults(handler=reproduce_named)

    schema = subparsers.add_parser("schema", help="print the experiment config JSON schema")
    schema.set_defaults(handler=print_schema)


def _print_checks(result: ExperimentResult) -> None:
    for check in result.checks:
        measured = ", ".join(f"{value:.6g}" for value in check.measured)
        print(f"{check.verdict} {check.name}: [{measured}] {check.detail}".rstrip(), flush=True)
    print(f"{result.name}: {'PASS' if result.passed else 'FAIL'}", flush=True)


def _execute(args: argparse.Namespace, config: ExperimentConfig, config_sha256: str, default_dir: Path, report: bool) -> int:
    result = experiments.run_experiment(config, seed=args.seed)
    storage = get_storage(args, default_dir)
    experiments.emit(
        config,
        result,
        storage,
        config_sha256,
        seed=args.seed,
        report=report,
        table_format=args.format,
    )
    _print_checks(result)
    return 0 if result.passed else EXIT_FAIL


def run_config(args: argparse.Namespace) -> int:
    config, config_sha256 = experiments.load_config(args.config)
    default_dir = config.output_dir or settings.OUTPUT_DIR / config.name
    return _execute(args, config, config_sha256, default_dir, args.report)


def reproduce_named(args: argparse.Namespace) -> int:
    config, config_sha256 = experiments.load_config(experiments.canonical_config_path(args.name))
    logger.info(f"Reproducing {args.name}")
    return _execute(args, config, config_sha256, settings.OUTPUT_DIR / args.name, True)


def print_schema(args: argparse.Namespace) -> int:
    print(json.dumps(experiments.config_schema(), indent=2, sort_keys=True), flush=True)
    return 0
