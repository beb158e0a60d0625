"""`fixed-point`, `exact`, `sample` and `analyze`: single-model computations."""
import argparse
import logging
import math
from pathlib import Path

import numpy as np

from mfising.cli.deps import add_params_arguments, emit_table, finish, get_params, get_seed, get_storage
from mfising.core.exceptions import InfeasibleParametersError
from mfising.schemas.analysis import LimitLawKind, Statistic
from mfising.schemas.sampler import InitKind, SampleBatch, SamplerConfig
from mfising.services import analysis, exact, meanfield, sampler
from mfising.services.experiments import apply_shift, default_statistic, limit_law_for
from mfising.services.storage import read_law, read_matrix, read_samples


logger = logging.getLogger(__name__)

EXACT_SOURCES = ("cw", "blocked", "bruteforce", "iid")


def register(subparsers: argparse._SubParsersAction) -> None:
    fixed_point = subparsers.add_parser("fixed-point", help="regime, fixed point t and limit variance tau")
    add_params_arguments(fixed_point)
    fixed_point.set_defaults(handler=solve)

    law = subparsers.add_parser("exact", help="exact magnetization law written as law.csv")
    add_params_arguments(law)
    law.add_argument("--source", choices=EXACT_SOURCES, default="cw")
    law.add_argument("--n", type=int, help="site count for cw and iid")
    law.add_argument("--block-sizes", type=int, nargs="+", help="block sizes for blocked")
    law.add_argument("--within", type=float, help="within-block coupling for blocked")
    law.add_argument("--between", type=float, default=0.0, help="between-block coupling for blocked")
    law.add_argument("--matrix", type=Path, help="matrix file for bruteforce")
    law.set_defaults(handler=exact_law)

    sample = subparsers.add_parser("sample", help="Glauber or auxiliary-variable samples written as samples.csv")
    add_params_arguments(sample)
    target = sample.add_mutually_exclusive_group(required=True)
    target.add_argument("--matrix", type=Path, help="run Glauber chains on this coupling")
    target.add_argument("--cw", type=int, metavar="N", help="exact Curie-Weiss draws at N sites")
    sample.add_argument("--burn-in", type=int, default=200, help="burn-in sweeps")
    sample.add_argument("--thin", type=int, default=1, help="sweeps between draws")
    sample.add_argument("--samples", type=int, default=1000, help="draws per chain")
    sample.add_argument("--chains", type=int, default=1)
    sample.add_argument("--init", choices=[k.value for k in InitKind], default=InitKind.RANDOM.value)
    sample.set_defaults(handler=sample_model)

    analyze = subparsers.add_parser("analyze", help="center a law or samples and measure the KS distance")
    add_params_arguments(analyze)
    source = analyze.add_mutually_exclusive_group(required=True)
    source.add_argument("--law", type=Path, help="law.csv written by `exact`")
    source.add_argument("--samples", type=Path, help="samples.csv written by `sample`")
    analyze.add_argument("--statistic", choices=[s.value for s in Statistic])
    analyze.add_argument("--limit-law", choices=[k.value for k in LimitLawKind])
    analyze.add_argument("--shift-from", choices=["line_graph", "regularity_a", "regularity_b"])
    analyze.set_defaults(handler=analyze_source)


def solve(args: argparse.Namespace) -> int:
    regime = meanfield.classify(get_params(args))
    storage = get_storage(args)
    emit_table(args, storage, "regime", [regime.model_dump(mode="json")])
    finish(args, storage)
    return 0


def exact_law(args: argparse.Namespace) -> int:
    params = get_params(args)
    if args.source == "blocked":
        if not args.block_sizes or args.within is None:
            raise InfeasibleParametersError("blocked laws need --block-sizes and --within")
        law = exact.magnetization_law_blocked(args.block_sizes, args.within, args.between, params)
    elif args.source == "bruteforce":
        if args.matrix is None:
            raise InfeasibleParametersError("bruteforce laws need --matrix")
        law = exact.magnetization_law_bruteforce(read_matrix(args.matrix), params)
    else:
        if args.n is None:
            raise InfeasibleParametersError(f"{args.source} laws need --n")
        if args.source == "cw":
            law = exact.magnetization_law_cw(args.n, params)
        else:
            law = exact.iid_reference_law(args.n, params, meanfield.solve_fixed_point(params))

    storage = get_storage(args)
    path = storage.save_law(law, params)
    finish(args, storage)
    print(f"{law.label}: log_z={law.log_z:.12g} mean={law.mean():.6g} variance={law.variance():.6g} -> {path}", flush=True)
    return 0


def sample_model(args: argparse.Namespace) -> int:
    params = get_params(args)
    cfg = SamplerConfig(
        burn_in_sweeps=args.burn_in,
        thin_sweeps=args.thin,
        n_samples=args.samples,
        n_chains=args.chains,
        master_seed=get_seed(args),
        init=args.init,
    )
    if args.matrix is not None:
        batch = sampler.sample_ising(read_matrix(args.matrix), params, cfg)
    else:
        sigma_bar = sampler.sample_cw_auxiliary(args.cw, params, cfg)
        batch = SampleBatch(
            n=args.cw,
            chain=np.zeros(sigma_bar.size, dtype=np.int64),
            draw=np.arange(sigma_bar.size),
            sigma_bar=sigma_bar,
            m_sign=np.where(sigma_bar >= 0, 1, -1).astype(np.int8),
            label=f"auxiliary(n={args.cw}, beta={params.beta}, B={params.b_field})",
        )

    storage = get_storage(args)
    path = storage.save_samples(batch, cfg, extra={"beta": params.beta, "B": params.b_field})
    finish(args, storage, {"global": args.seed, "sampler": cfg.master_seed})
    print(f"{batch.label}: {len(batch)} draws -> {path}", flush=True)
    return 0


def analyze_source(args: argparse.Namespace) -> int:
    regime = meanfield.classify(get_params(args))
    statistic = Statistic(args.statistic) if args.statistic else default_statistic(regime)
    kind = LimitLawKind(args.limit_law) if args.limit_law else None
    law = apply_shift(limit_law_for(kind, regime), args.shift_from, regime, statistic, get_params(args))
    t = 0.0 if statistic == Statistic.QUARTER_N else regime.t

    source = read_law(args.law) if args.law is not None else read_samples(args.samples)
    centered = analysis.center(source, statistic, t)
    ks = analysis.ks_distance(centered, law)
    mean, variance = analysis.law_moments(centered)
    row = {
        "n": centered.n,
        "statistic": statistic.value,
        "limit_law": law.kind.value,
        "ks": ks,
        "ks_times_sqrt_n": ks * math.sqrt(centered.n),
        "mean_centered": mean,
        "variance_centered": variance,
    }
    if args.samples is not None:
        row["dkw_epsilon"] = analysis.dkw_epsilon(len(source))

    storage = get_storage(args)
    emit_table(args, storage, "analysis", [row])
    finish(args, storage)
    return 0
