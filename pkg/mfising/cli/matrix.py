"""`build` and `diagnose`: coupling matrices in and out of the matrix file format."""
import argparse
import json
import logging
from pathlib import Path
from typing import get_args

from mfising.cli.deps import add_params_arguments, emit_table, finish, get_params, get_seed, get_storage
from mfising.schemas.coupling import RegularKind, WignerLaw
from mfising.schemas.experiment import CouplingSpec, Ensemble
from mfising.services import coupling as builders
from mfising.services.experiments import build_coupling
from mfising.services.meanfield import solve_fixed_point
from mfising.services.storage import read_matrix


logger = logging.getLogger(__name__)

SPEC_FIELDS = (
    "n", "d", "kind", "p", "directed", "block_sizes", "prob", "a", "b",
    "law", "mu", "m", "denominator", "grid", "gamma",
)


def register(subparsers: argparse._SubParsersAction) -> None:
    build = subparsers.add_parser("build", help="build a coupling matrix and write it as a matrix file")
    build.add_argument("ensemble", choices=[e for e in get_args(Ensemble) if e != "file"])
    build.add_argument("--n", type=int)
    build.add_argument("--d", type=int, help="degree for regular graphs")
    build.add_argument("--kind", choices=[k.value for k in RegularKind])
    build.add_argument("--p", type=float, help="edge probability")
    build.add_argument("--directed", action="store_true", help="symmetrize a directed Erdos-Renyi draw")
    build.add_argument("--block-sizes", type=int, nargs="+")
    build.add_argument("--prob", type=json.loads, help="block probability matrix as JSON")
    build.add_argument("--a", type=float, help="block-spin within-block weight")
    build.add_argument("--b", type=float, help="block-spin between-block weight")
    build.add_argument("--law", choices=[w.value for w in WignerLaw])
    build.add_argument("--mu", type=float, help="mean of the Wigner entry law")
    build.add_argument("--m", type=int, help="vertex count of K_m for the line graph")
    build.add_argument("--denominator", type=float)
    build.add_argument("--grid", type=json.loads, help="graphon grid as JSON")
    build.add_argument("--gamma", type=float, help="graphon sparsity exponent")
    build.add_argument("--file", default="coupling.txt", help="file name inside the output directory")
    build.set_defaults(handler=build_matrix)

    diagnose = subparsers.add_parser("diagnose", help="row sums, norms, top eigenvalues and rate terms of a matrix")
    diagnose.add_argument("matrix", type=Path)
    add_params_arguments(diagnose, required=False)
    diagnose.set_defaults(handler=diagnose_matrix)


def build_matrix(args: argparse.Namespace) -> int:
    fields = {name: getattr(args, name) for name in SPEC_FIELDS if getattr(args, name) is not None}
    spec = CouplingSpec(ensemble=args.ensemble, **fields)
    seed = get_seed(args)
    coupling = build_coupling(spec, seed=seed)

    storage = get_storage(args)
    path = storage.save_matrix(coupling, args.file)
    finish(args, storage, {"global": args.seed, "coupling": seed})
    edges = len(coupling.upper_triplets()[2])
    print(f"{coupling.label}: n={coupling.n}, edges={edges} -> {path}", flush=True)
    return 0


def diagnose_matrix(args: argparse.Namespace) -> int:
    coupling = read_matrix(args.matrix)
    diag = builders.diagnostics(coupling)
    t = solve_fixed_point(get_params(args)) if args.beta is not None else 0.0
    terms = builders.rate_terms(diag, t, coupling.n)

    row = {"t": t}
    row.update(diag.summary())
    row.update(terms.model_dump())
    storage = get_storage(args)
    emit_table(args, storage, "diagnostics", [row])
    finish(args, storage)
    return 0
