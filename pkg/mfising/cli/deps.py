import argparse
import hashlib
import json
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

import mfising
from mfising.core.config import settings
from mfising.schemas.meanfield import ModelParams
from mfising.services.storage import StorageService, get_storage_service, render_csv


Row = Dict[str, Any]


def add_params_arguments(parser: argparse.ArgumentParser, required: bool = True) -> None:
    parser.add_argument("--beta", type=float, required=required, help="inverse temperature")
    parser.add_argument("--b-field", type=float, default=0.0, help="external field B")


def get_params(args: argparse.Namespace) -> ModelParams:
    return ModelParams(beta=args.beta, b_field=args.b_field)


def get_seed(args: argparse.Namespace) -> int:
    return args.seed if args.seed is not None else settings.DEFAULT_SEED


def get_storage(args: argparse.Namespace, default: Optional[Path] = None) -> StorageService:
    """Storage rooted at --output, else `default`, else settings.OUTPUT_DIR."""
    output = args.output if args.output is not None else default
    return get_storage_service(output) if output is not None else StorageService()


def plain(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    return value


def command_hash(args: argparse.Namespace) -> str:
    """Hash of the parsed command line, recorded in the manifest of ad-hoc subcommands."""
    options = {k: str(v) for k, v in vars(args).items() if k != "handler"}
    return hashlib.sha256(json.dumps(options, sort_keys=True).encode()).hexdigest()


def emit_table(args: argparse.Namespace, storage: StorageService, stem: str, rows: List[Row]) -> Path:
    """Write rows as `<stem>.csv` or `<stem>.json` per --format and echo them to stdout."""
    rows = [{k: plain(v) for k, v in row.items()} for row in rows]
    if args.format == "json":
        path = storage.write_json(f"{stem}.json", rows)
        text = json.dumps(rows, indent=2, sort_keys=True)
    else:
        columns = list(dict.fromkeys(key for row in rows for key in row))
        text = render_csv(columns, ([row.get(c) for c in columns] for row in rows))
        path = storage.write_text(f"{stem}.csv", text)
    print(text.rstrip("\n"), flush=True)
    return path


def finish(args: argparse.Namespace, storage: StorageService, seeds: Optional[Dict[str, Any]] = None) -> None:
    storage.write_manifest(command_hash(args), mfising.__version__, seeds or {"global": args.seed})
