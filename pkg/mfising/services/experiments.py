"""
Experiment runner.

Loads an ExperimentConfig, sweeps its sizes through the requested task,
evaluates the acceptance checks and writes CSV / JSON artifacts plus a
manifest through the storage service.
"""
import hashlib
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import ValidationError

import mfising
from mfising.core.config import settings
from mfising.core.exceptions import InfeasibleParametersError, RegimeMismatchError
from mfising.schemas.analysis import LimitLaw, LimitLawKind, Statistic
from mfising.schemas.coupling import CouplingMatrix
from mfising.schemas.exact import MagnetizationLaw
from mfising.schemas.experiment import (
    CheckKind,
    CheckResult,
    CheckSpec,
    CouplingSpec,
    ExperimentConfig,
    ExperimentResult,
    LawSource,
    Task,
)
from mfising.schemas.meanfield import ModelParams, Regime, RegimeLabel
from mfising.schemas.sampler import SampleBatch
from mfising.services import analysis, coupling as builders, exact, meanfield, sampler
from mfising.services.report import render_report
from mfising.services.storage import StorageService, read_matrix


logger = logging.getLogger(__name__)

CANONICAL_DIR = Path(__file__).parent.parent / "experiments"
CANONICAL_NAMES = (
    "cw-rate",
    "critical-rate",
    "disjoint-limit",
    "disjoint-critical",
    "meanfield-gap",
    "line-graph-shift",
    "concentration",
    "theta2-centering",
    "line-graph-spectrum",
)

Row = Dict[str, Union[int, float]]


# ============ Config loading ============

def load_config(path: Path) -> Tuple[ExperimentConfig, str]:
    """Parse a config file; returns the config and the sha256 of its bytes."""
    raw = Path(path).read_bytes()
    config = ExperimentConfig.model_validate_json(raw)
    return config, hashlib.sha256(raw).hexdigest()


def canonical_config_path(name: str) -> Path:
    if name not in CANONICAL_NAMES:
        raise InfeasibleParametersError(f"unknown experiment; choose one of {', '.join(CANONICAL_NAMES)}", name)
    return CANONICAL_DIR / f"{name}.json"


def config_schema() -> Dict[str, Any]:
    return ExperimentConfig.model_json_schema()


def format_validation_error(error: ValidationError) -> str:
    """One `field.path: reason` line per problem."""
    lines = []
    for item in error.errors():
        location = ".".join(str(part) for part in item["loc"]) or "config"
        lines.append(f"{location}: {item['msg']}")
    return "\n".join(lines)


# ============ Builders ============

def _require(spec: CouplingSpec, field: str) -> Any:
    value = getattr(spec, field)
    if value is None:
        raise InfeasibleParametersError(f"ensemble {spec.ensemble} needs coupling.{field}")
    return value


def build_coupling(spec: CouplingSpec, size: Optional[int] = None, seed: Optional[int] = None) -> CouplingMatrix:
    """Build the coupling a spec describes, with `size` substituted for n (or m)."""
    if size is not None:
        spec = spec.model_copy(update={spec.size_field: size})
    seed = spec.seed if spec.seed is not None else seed
    ensemble = spec.ensemble

    if ensemble == "file":
        return read_matrix(spec.path)
    if ensemble == "line_graph":
        return builders.build_line_graph_complete(_require(spec, "m"))

    n = _require(spec, "n")
    if ensemble == "regular":
        return builders.build_regular(n, _require(spec, "d"), spec.kind, seed)
    if ensemble == "erdos_renyi":
        return builders.build_erdos_renyi(n, _require(spec, "p"), seed, spec.directed)
    if ensemble == "sbm":
        prob = _require(spec, "prob")
        sizes = spec.block_sizes
        if sizes is None or sum(sizes) != n:
            k = len(prob)
            sizes = [n // k + (1 if r < n % k else 0) for r in range(k)]
        return builders.build_sbm(sizes, prob, seed)
    if ensemble == "block_spin":
        return builders.build_block_spin(n, _require(spec, "a"), _require(spec, "b"))
    if ensemble == "wigner":
        return builders.build_wigner(n, spec.law, spec.mu, seed)
    if ensemble == "complete":
        return builders.build_complete(n, spec.denominator)
    if ensemble == "two_complete":
        return builders.build_two_complete(n)
    if ensemble == "uneven_complete":
        return builders.build_uneven_complete(n)
    if ensemble == "graphon":
        return builders.build_graphon(n, _require(spec, "grid"), spec.gamma, seed)
    raise InfeasibleParametersError(f"unknown ensemble {ensemble}")


# ============ Laws and samples ============

def _law_for(config: ExperimentConfig, n: int, seed: Optional[int]) -> Union[MagnetizationLaw, SampleBatch, np.ndarray]:
    source, params = config.law_source, config.params
    if source == LawSource.EXACT_CW:
        return exact.magnetization_law_cw(n, params)
    if source == LawSource.EXACT_BLOCKED:
        k = config.block_count
        if n % k:
            raise InfeasibleParametersError("n must be divisible by block_count", f"n={n}, k={k}")
        # uncoupled blocks, each a complete graph scaled by its own size
        return exact.magnetization_law_blocked([n // k] * k, k / n, 0.0, params)
    if source == LawSource.BRUTEFORCE:
        return exact.magnetization_law_bruteforce(build_coupling(config.coupling, n, seed), params)
    cfg = config.sampler
    if seed is not None:
        cfg = cfg.model_copy(update={"master_seed": seed})
    if source == LawSource.AUXILIARY:
        return sampler.sample_cw_auxiliary(n, params, cfg)
    return sampler.sample_ising(build_coupling(config.coupling, n, seed), params, cfg)


def _sites(source: Union[MagnetizationLaw, SampleBatch, np.ndarray], fallback: int) -> int:
    return source.n if isinstance(source, (MagnetizationLaw, SampleBatch)) else fallback


def default_statistic(regime: Regime) -> Statistic:
    if regime.label == RegimeLabel.THETA3:
        return Statistic.QUARTER_N
    if regime.label == RegimeLabel.THETA2:
        return Statistic.SQRTN_MINUS_M
    return Statistic.SQRTN_MINUS_T


def target_law(config: ExperimentConfig, regime: Regime) -> LimitLaw:
    """Limit law the experiment compares against, shifted when a counterexample asks for it."""
    statistic = config.analysis.statistic or default_statistic(regime)
    law = limit_law_for(config.analysis.limit_law, regime)
    return apply_shift(law, config.analysis.shift_from, regime, statistic, config.params)


def limit_law_for(kind: Optional[LimitLawKind], regime: Regime) -> LimitLaw:
    """The requested limit law, or the regime default when `kind` is None."""
    if kind is None:
        kind = LimitLawKind.QUARTIC_W if regime.is_critical else LimitLawKind.GAUSSIAN
    if kind == LimitLawKind.GAUSSIAN:
        if regime.tau is None:
            raise RegimeMismatchError("a Gaussian limit needs a non-critical regime")
        law = LimitLaw.gaussian(regime.tau)
    elif kind == LimitLawKind.QUARTIC_W:
        law = LimitLaw.quartic_w()
    elif kind == LimitLawKind.QUARTIC_PAIR:
        law = LimitLaw.quartic_pair()
    else:
        law = LimitLaw.modified_w_tilde()
    return law


def mirrored_shift(which: Optional[str], regime: Regime) -> bool:
    """Whether the counterexample shift changes sign with the mode, sgn(M(sigma))."""
    return which == "line_graph" and regime.label == RegimeLabel.THETA2


def apply_shift(
    law: LimitLaw,
    which: Optional[str],
    regime: Regime,
    statistic: Statistic,
    params: ModelParams,
) -> LimitLaw:
    """
    Shift `law` for the counterexample `which`.

    In Theta2 the line-graph shift points toward the origin on each mode, so
    after sqrtN_minus_M centering the target is the equal mixture at -mu and +mu.
    """
    shift = shift_for(which, params)
    if not mirrored_shift(which, regime):
        return law.shifted(shift)
    if statistic != Statistic.SQRTN_MINUS_M:
        raise RegimeMismatchError(
            f"the line-graph shift in Theta2 needs sqrtN_minus_M centering, got {statistic.value}"
        )
    return law.shifted(shift).mirror()


def expected_shift(config: ExperimentConfig) -> float:
    """Limit location of the centered statistic for the configured counterexample, on the + mode in Theta2."""
    return shift_for(config.analysis.shift_from, config.params)


def shift_for(which: Optional[str], params: ModelParams) -> float:
    if which is None:
        return 0.0
    mu = analysis.counterexample_mu(params.beta, params.b_field, which)
    # the line-graph statistic plus mu converges, the regularity ones converge to mu plus noise
    return -mu if which == "line_graph" else mu


def _rate(n: int, rate: str) -> float:
    return math.sqrt(n) if rate == "sqrt_n" else math.sqrt(n) / math.log(n)


# ============ Tasks ============

def _map_sizes(work: Callable[[int], List[Row]], sizes: List[int]) -> List[Row]:
    """Run `work` per size, on worker threads when THREADS > 1; rows keep sweep order."""
    if settings.THREADS > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=settings.THREADS) as executor:
            chunks = list(executor.map(work, sizes))
    else:
        chunks = [work(size) for size in sizes]
    return [row for chunk in chunks for row in chunk]


def _rate_rows(config: ExperimentConfig, regime: Regime, seed: Optional[int]) -> List[Row]:
    statistic = config.analysis.statistic or default_statistic(regime)
    law = target_law(config, regime)
    t = 0.0 if statistic == Statistic.QUARTER_N else regime.t

    def work(size: int) -> List[Row]:
        source = _law_for(config, size, seed)
        n = _sites(source, size)
        centered = analysis.center(source, statistic, t, n=n)
        ks = analysis.ks_distance(centered, law)
        row: Row = {"n": n, "ks": ks, "ks_times_sqrt_n": ks * math.sqrt(n)}
        if config.analysis.rate != "sqrt_n":
            row["ks_times_sqrt_n_over_log_n"] = ks * _rate(n, config.analysis.rate)
        logger.info(f"{config.name}: n={n} ks={ks:.6g}")
        return [row]

    return _map_sizes(work, config.sizes)


def _cluster_rows(config: ExperimentConfig, regime: Regime, seed: Optional[int]) -> List[Row]:
    def work(size: int) -> List[Row]:
        law = _law_for(config, size, seed)
        if not isinstance(law, MagnetizationLaw):
            raise InfeasibleParametersError("clusters need an exact law source")
        center_mass, plus, minus = analysis.cluster_masses(law, regime.t)
        return [{"n": law.n, "center": center_mass, "plus": plus, "minus": minus}]

    return _map_sizes(work, config.sizes)


def _meanfield_rows(config: ExperimentConfig, regime: Regime, seed: Optional[int]) -> List[Row]:
    params = config.params

    def work(size: int) -> List[Row]:
        coupling = build_coupling(config.coupling, size, seed)
        log_z = exact.partition_function_bruteforce(coupling, params)
        prediction = meanfield.mean_field_prediction(coupling, params)
        gap = meanfield.mean_field_gap(coupling, params, log_z)
        diag = builders.diagnostics(coupling)
        bound = meanfield.mean_field_error_bound(diag, regime)
        return [{
            "n": coupling.n,
            "log_z": log_z,
            "mean_field": prediction,
            "gap": gap,
            "frobenius_sq": diag.frobenius_sq,
            "bound": bound,
            "gap_over_bound": gap / bound if bound > 0 else math.inf,
        }]

    return _map_sizes(work, config.sizes)


def _concentration_rows(config: ExperimentConfig, regime: Regime, seed: Optional[int]) -> List[Row]:
    use_sign = regime.label in (RegimeLabel.THETA2, RegimeLabel.THETA3)

    def work(size: int) -> List[Row]:
        law = _law_for(config, size, seed)
        if not isinstance(law, MagnetizationLaw):
            raise InfeasibleParametersError("concentration needs an exact law source")
        curve = analysis.concentration_curve(law, regime.t, config.deltas, use_sign=use_sign)
        return [
            {"n": law.n, "delta": delta, "log_prob": log_prob, "log_prob_over_n": log_prob / law.n}
            for delta, log_prob in curve
        ]

    return _map_sizes(work, config.sizes)


def _shift_rows(config: ExperimentConfig, regime: Regime, seed: Optional[int]) -> List[Row]:
    statistic = config.analysis.statistic or default_statistic(regime)
    shift = expected_shift(config)
    fold = mirrored_shift(config.analysis.shift_from, regime)
    if fold and statistic != Statistic.SQRTN_MINUS_M:
        raise RegimeMismatchError("the line-graph shift in Theta2 needs sqrtN_minus_M centering")

    def work(size: int) -> List[Row]:
        source = _law_for(config, size, seed)
        n = _sites(source, size)
        centered = analysis.center(source, statistic, regime.t, n=n)
        if fold:
            centered = analysis.fold_modes(centered, source)
        mean, variance = analysis.law_moments(centered)
        relative = abs(mean - shift) / abs(shift) if shift else math.inf
        return [{
            "n": n,
            "mean_centered": mean,
            "variance_centered": variance,
            "expected_shift": shift,
            "relative_error": relative,
        }]

    return _map_sizes(work, config.sizes)


def _diagnose_rows(config: ExperimentConfig, regime: Regime, seed: Optional[int]) -> List[Row]:
    def work(size: int) -> List[Row]:
        coupling = build_coupling(config.coupling, size, seed)
        diag = builders.diagnostics(coupling)
        terms = builders.rate_terms(diag, regime.t, coupling.n)
        row: Row = {"n": coupling.n}
        if config.coupling.size_field == "m":
            row["m"] = size
            # alternative value quoted for lambda2, kept next to the computed one
            row["lambda2_m_minus_2"] = float(size - 2)
        row.update(diag.summary())
        row["lambda1_unscaled"] = diag.lambda1 * (coupling.scale or 1.0)
        row["lambda2_unscaled"] = diag.lambda2 * (coupling.scale or 1.0)
        row["frobenius_sq_over_sqrt_n"] = diag.frobenius_sq / math.sqrt(coupling.n)
        row.update(terms.model_dump())
        return [row]

    return _map_sizes(work, config.sizes)


TASKS = {
    Task.RATE: _rate_rows,
    Task.CLUSTERS: _cluster_rows,
    Task.MEANFIELD_GAP: _meanfield_rows,
    Task.CONCENTRATION: _concentration_rows,
    Task.SHIFT: _shift_rows,
    Task.DIAGNOSE: _diagnose_rows,
}

CSV_COLUMNS = {
    Task.RATE: ["n", "ks", "ks_times_sqrt_n"],
    Task.CLUSTERS: ["n", "center", "plus", "minus"],
    Task.MEANFIELD_GAP: ["n", "log_z", "mean_field", "gap", "frobenius_sq", "bound", "gap_over_bound"],
    Task.CONCENTRATION: ["n", "delta", "log_prob", "log_prob_over_n"],
    Task.SHIFT: ["n", "mean_centered", "variance_centered", "expected_shift", "relative_error"],
}


# ============ Checks ============

def evaluate_check(check: CheckSpec, rows: List[Row]) -> CheckResult:
    """Apply one acceptance check to the rows matching its `where` filter."""
    selected = [row for row in rows if all(row.get(k) == v for k, v in check.where.items())]
    values = [float(row[check.column]) for row in selected if check.column in row]

    def result(passed: bool, detail: str = "") -> CheckResult:
        return CheckResult(
            name=check.name,
            kind=check.kind,
            passed=bool(passed),
            gating=check.gating,
            measured=values,
            detail=detail,
        )

    if not values:
        return result(False, f"no rows carry column {check.column!r}")
    array = np.asarray(values)

    if check.kind == CheckKind.VALUE_RANGE:
        lower = -np.inf if check.lower is None else check.lower
        upper = np.inf if check.upper is None else check.upper
        return result(np.all((array >= lower) & (array <= upper)), f"range [{lower}, {upper}]")
    if check.kind == CheckKind.STRICTLY_DECREASING:
        return result(np.all(np.diff(array) < 0), "strictly decreasing in sweep order")
    if check.kind == CheckKind.RATIO_BAND:
        if array[0] == 0:
            return result(False, "first value is zero")
        ratios = array / array[0]
        return result(np.all(np.abs(ratios - 1) <= check.tolerance), f"ratios {np.round(ratios, 4).tolist()}")
    if check.kind == CheckKind.FACTOR_BAND:
        if np.any(array <= 0):
            return result(False, "factor band needs positive values")
        spread = float(array.max() / array.min())
        return result(spread <= check.factor, f"max/min = {spread:.4g}")
    # stabilizes
    if np.any(array == 0):
        return result(False, "stabilization needs nonzero values")
    changes = np.abs(array[1:] / array[:-1] - 1)
    return result(np.all(changes <= check.tolerance), f"successive changes {np.round(changes, 4).tolist()}")


# ============ Runner ============

def run_experiment(config: ExperimentConfig, seed: Optional[int] = None) -> ExperimentResult:
    """Compute the rows of an experiment and evaluate its checks; writes nothing."""
    started = time.perf_counter()
    regime = meanfield.classify(config.params)
    rows = TASKS[config.task](config, regime, seed)
    checks = [evaluate_check(check, rows) for check in config.checks]
    for check in checks:
        if not check.passed and not check.gating:
            logger.warning(f"{config.name}: non-gating check {check.name} failed ({check.detail})")
    columns = list(dict.fromkeys(key for row in rows for key in row))
    return ExperimentResult(
        name=config.name,
        task=config.task,
        columns=columns,
        rows=[{k: _plain(v) for k, v in row.items()} for row in rows],
        checks=checks,
        runtime_ms=(time.perf_counter() - started) * 1000,
    )


def _plain(value: Any) -> Union[int, float]:
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return int(value)
    return float(value)


def _summary(config: ExperimentConfig, result: ExperimentResult) -> Dict[str, Any]:
    regime = meanfield.classify(config.params)
    summary: Dict[str, Any] = {
        "name": result.name,
        "task": result.task.value,
        "regime": regime.model_dump(mode="json"),
        "runtime_ms": result.runtime_ms,
        "checks": [check.model_dump(mode="json") for check in result.checks],
    }
    if config.task == Task.RATE and result.rows:
        statistic = config.analysis.statistic or default_statistic(regime)
        ns = [row["n"] for row in result.rows]
        ks = [row["ks"] for row in result.rows]
        constant, _ = analysis.fit_rate_constant(ns, ks, config.analysis.rate)
        summary.update({
            "statistic": statistic.value,
            "n": ns,
            "ks": ks,
            "rate_rhs": [1.0 / _rate(n, config.analysis.rate) for n in ns],
            "fitted_constant": constant,
        })
    return summary


def emit(
    config: ExperimentConfig,
    result: ExperimentResult,
    storage: StorageService,
    config_sha256: Optional[str],
    seed: Optional[int] = None,
    report: bool = False,
    table_format: str = "csv",
) -> None:
    """
    Write the result table, the JSON summary, an optional report and the manifest.

    The table is `<task>.csv`, or `<task>.json` (a list of row objects) when
    table_format is json.
    """
    columns = CSV_COLUMNS.get(config.task, result.columns)
    if config.task == Task.RATE and config.analysis.rate != "sqrt_n":
        columns = columns + ["ks_times_sqrt_n_over_log_n"]
    if table_format == "json":
        rows = [{c: _plain(row[c]) for c in columns if c in row} for row in result.rows]
        storage.write_json(f"{config.task.value}.json", rows)
    elif table_format == "csv":
        storage.write_csv(f"{config.task.value}.csv", columns, ([row.get(c) for c in columns] for row in result.rows))
    else:
        raise InfeasibleParametersError("table format must be csv or json", table_format)
    storage.write_json("result.json", _summary(config, result))
    if report:
        storage.write_text("report.md", render_report(config, result))
    coupling_seed = None
    if config.coupling:
        coupling_seed = config.coupling.seed if config.coupling.seed is not None else seed
    sampler_seed = None
    if config.sampler:
        sampler_seed = seed if seed is not None else config.sampler.master_seed
    seeds = {"global": seed, "coupling": coupling_seed, "sampler": sampler_seed}
    storage.write_manifest(config_sha256, mfising.__version__, seeds)
    logger.info(f"Emitted {len(storage.emitted)} files for {config.name} into {storage.output_dir}")


def canonical_hash(config: ExperimentConfig) -> str:
    payload = json.dumps(config.model_dump(mode="json"), sort_keys=True).encode()
    return hashlib.sha256(payload).hexdigest()
