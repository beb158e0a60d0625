"""
Exact partition functions and magnetization laws.

Full enumeration of {-1, 1}^n for small n, and sufficient-statistic
enumeration for the Curie-Weiss, block-constant and i.i.d. reference laws.
All arithmetic is carried in log form with a single final normalization.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from functools import reduce
from typing import List, Sequence, Tuple

import numpy as np
from scipy.special import expit, gammaln, logsumexp
from scipy.stats import binom

from mfising.core.config import settings
from mfising.core.exceptions import InfeasibleParametersError, SizeLimitError
from mfising.schemas.coupling import CouplingMatrix
from mfising.schemas.exact import MagnetizationLaw, SpinConfiguration
from mfising.schemas.meanfield import ModelParams


logger = logging.getLogger(__name__)


# ============ Log-domain helpers ============

def _binned_logsumexp(log_w: np.ndarray, bins: np.ndarray, n_bins: int) -> np.ndarray:
    """logsumexp of log_w grouped by integer bin; empty bins give -inf."""
    top = np.full(n_bins, -np.inf)
    np.maximum.at(top, bins, log_w)
    mass = np.zeros(n_bins)
    np.add.at(mass, bins, np.exp(log_w - top[bins]))
    with np.errstate(divide="ignore"):
        return top + np.log(mass)


def _normalize(support: np.ndarray, log_w: np.ndarray, log_z: float, n: int, label: str) -> MagnetizationLaw:
    log_probs = log_w - logsumexp(log_w)
    return MagnetizationLaw(n=n, support=support, log_probs=log_probs, log_z=float(log_z), label=label)


def _log_binomial(n: int, k: np.ndarray) -> np.ndarray:
    return gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)


def _magnetization_support(n: int) -> np.ndarray:
    return np.arange(-n, n + 1, 2, dtype=np.int64)


# ============ Brute-force enumeration ============

def _check_enumerable(n: int, cap: int, setting: str) -> None:
    if n > cap:
        raise SizeLimitError("brute-force enumeration", n, cap, setting)


def _spin_block(n: int, start: int, stop: int) -> np.ndarray:
    """Configurations start..stop-1 in binary order; site 0 is the most significant bit."""
    codes = np.arange(start, stop, dtype=np.int64)
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    bits = (codes[:, None] >> shifts[None, :]) & 1
    return (2 * bits - 1).astype(np.int8)


def _log_weights(dense: np.ndarray, params: ModelParams, spins: np.ndarray) -> np.ndarray:
    s = spins.astype(float)
    quadratic = np.einsum("ij,ij->i", s @ dense, s)
    return params.beta / 2 * quadratic + params.b_field * s.sum(axis=1)


def _chunk_bounds(n: int) -> List[Tuple[int, int]]:
    total = 1 << n
    step = max(1, settings.ENUMERATION_CHUNK)
    return [(start, min(start + step, total)) for start in range(0, total, step)]


def _enumerate_bins(coupling: CouplingMatrix, params: ModelParams) -> np.ndarray:
    """Unnormalized log-mass of each magnetization bin (number of +1 spins)."""
    n = coupling.n
    dense = coupling.to_dense()

    def work(bounds: Tuple[int, int]) -> np.ndarray:
        spins = _spin_block(n, *bounds)
        plus = (spins > 0).sum(axis=1)
        return _binned_logsumexp(_log_weights(dense, params, spins), plus, n + 1)

    chunks = _chunk_bounds(n)
    if settings.THREADS > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=settings.THREADS) as executor:
            partials = list(executor.map(work, chunks))
    else:
        partials = [work(bounds) for bounds in chunks]
    return reduce(np.logaddexp, partials)


def partition_function_bruteforce(coupling: CouplingMatrix, params: ModelParams) -> float:
    """log Z_N by summing exp((beta/2) s'As + B sum s) over all 2^n configurations."""
    _check_enumerable(coupling.n, settings.EXACT_MAX_SITES, "EXACT_MAX_SITES")
    return float(logsumexp(_enumerate_bins(coupling, params)))


def magnetization_law_bruteforce(coupling: CouplingMatrix, params: ModelParams) -> MagnetizationLaw:
    """Exact law of sum_i sigma_i under the Gibbs measure."""
    n = coupling.n
    _check_enumerable(n, settings.EXACT_MAX_SITES, "EXACT_MAX_SITES")
    log_w = _enumerate_bins(coupling, params)
    law = _normalize(
        _magnetization_support(n),
        log_w,
        logsumexp(log_w),
        n,
        f"bruteforce({coupling.label}, beta={params.beta}, B={params.b_field})",
    )
    logger.info(f"Enumerated 2^{n} configurations for {coupling.label}")
    return law


def configuration_law_bruteforce(
    coupling: CouplingMatrix,
    params: ModelParams,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Full Gibbs pmf over {-1, 1}^n.

    Returns:
        (spins, probs): spins is a 2^n x n int8 matrix in binary order
        (row 0 is all -1), probs the matching probabilities
    """
    spins = enumerate_configurations(coupling.n)
    log_w = _log_weights(coupling.to_dense(), params, spins)
    return spins, np.exp(log_w - logsumexp(log_w))


def enumerate_configurations(n: int) -> np.ndarray:
    """All 2^n spin vectors as rows, in binary order with row 0 all -1."""
    _check_enumerable(n, settings.CONFIGURATION_MAX_SITES, "CONFIGURATION_MAX_SITES")
    return _spin_block(n, 0, 1 << n)


# ============ Sufficient-statistic laws ============

def magnetization_law_cw(n: int, params: ModelParams) -> MagnetizationLaw:
    """
    Curie-Weiss law, weight(S) = C(n, k) exp((beta/(2n)) S^2 + B S) with k = (n - S)/2.

    log_z is reported for the zero-diagonal coupling K_n / n, whose energy
    differs from (beta/(2n)) S^2 by the constant beta/2.
    """
    if n < 1:
        raise InfeasibleParametersError("n >= 1", f"n={n}")
    if n > settings.CW_MAX_SITES:
        raise SizeLimitError("Curie-Weiss law", n, settings.CW_MAX_SITES, "CW_MAX_SITES")
    support = _magnetization_support(n)
    s = support.astype(float)
    log_w = _log_binomial(n, (n - support) // 2) + params.beta / (2 * n) * s ** 2 + params.b_field * s
    log_z = logsumexp(log_w) - params.beta / 2
    return _normalize(support, log_w, log_z, n, f"cw(n={n}, beta={params.beta}, B={params.b_field})")


def magnetization_law_blocked(
    block_sizes: Sequence[int],
    within: float,
    between: float,
    params: ModelParams,
) -> MagnetizationLaw:
    """
    Exact law for a block-constant coupling.

    A(i, j) = within for distinct sites of the same block and between across
    blocks. Block magnetizations are enumerated with binomial multiplicities;
    the first block is looped over and the rest are vectorized.
    """
    sizes = [int(s) for s in block_sizes]
    if not sizes or any(s <= 0 for s in sizes):
        raise InfeasibleParametersError("block sizes must be positive", f"sizes={sizes}")
    if within < 0 or between < 0:
        raise InfeasibleParametersError("within, between >= 0", f"within={within}, between={between}")
    if len(sizes) > settings.BLOCKED_MAX_BLOCKS:
        raise SizeLimitError("block count", len(sizes), settings.BLOCKED_MAX_BLOCKS, "BLOCKED_MAX_BLOCKS")
    states = int(np.prod([s + 1 for s in sizes], dtype=object))
    if states > settings.BLOCKED_MAX_STATES:
        raise SizeLimitError("blocked state space", states, settings.BLOCKED_MAX_STATES, "BLOCKED_MAX_STATES")

    n = sum(sizes)
    beta, b_field = params.beta, params.b_field
    first, rest = sizes[0], sizes[1:]

    # grid over the block magnetizations of blocks 1.. as flat arrays
    rest_mags = [_magnetization_support(size) for size in rest]
    if rest_mags:
        mesh = np.meshgrid(*rest_mags, indexing="ij")
        rest_s = [m.ravel().astype(float) for m in mesh]
        rest_log_mult = sum(
            _log_binomial(size, (size - m.ravel()) // 2) for size, m in zip(rest, mesh)
        )
    else:
        rest_s, rest_log_mult = [], np.zeros(1)
    rest_total = sum(rest_s) if rest_s else np.zeros(1)
    rest_square = sum(s ** 2 for s in rest_s) if rest_s else np.zeros(1)
    # sum over unordered pairs of distinct rest blocks
    rest_cross = (rest_total ** 2 - rest_square) / 2

    totals = np.full(n + 1, -np.inf)
    for s0 in _magnetization_support(first):
        s0f = float(s0)
        square = s0f ** 2 + rest_square
        cross = s0f * rest_total + rest_cross
        energy = beta / 2 * (within * (square - n) + 2 * between * cross)
        total = s0f + rest_total
        log_w = (
            _log_binomial(first, (first - s0) // 2)
            + rest_log_mult
            + energy
            + b_field * total
        )
        bins = ((total + n) / 2).round().astype(np.int64)
        totals = np.logaddexp(totals, _binned_logsumexp(log_w, bins, n + 1))

    label = f"blocked(sizes={sizes}, within={within}, between={between}, beta={beta}, B={b_field})"
    law = _normalize(_magnetization_support(n), totals, logsumexp(totals), n, label)
    logger.info(f"Enumerated {states} block states for {label}")
    return law


def iid_reference_law(n: int, params: ModelParams, t: float) -> MagnetizationLaw:
    """
    Law of sum_i sigma_i under i.i.d. spins with P(+1) = e^h / (2 cosh h), h = beta t + B.

    log_z = n log(2 cosh h) is the normalizer of the product measure.
    """
    if n < 1:
        raise InfeasibleParametersError("n >= 1", f"n={n}")
    if n > settings.CW_MAX_SITES:
        raise SizeLimitError("i.i.d. reference law", n, settings.CW_MAX_SITES, "CW_MAX_SITES")
    h = params.beta * t + params.b_field
    support = _magnetization_support(n)
    with np.errstate(divide="ignore"):
        log_w = binom.logpmf((support + n) // 2, n, expit(2 * h))
    log_z = n * np.logaddexp(h, -h)
    return _normalize(support, log_w, log_z, n, f"iid(n={n}, beta={params.beta}, B={params.b_field}, t={t:.6g})")


def conditional_mean(
    coupling: CouplingMatrix,
    config: SpinConfiguration,
    i: int,
    params: ModelParams,
) -> float:
    """E[sigma_i | sigma_j, j != i] = tanh(beta m_i(sigma) + B) from the cached local field."""
    if not 0 <= i < coupling.n:
        raise IndexError(f"site {i} out of range for n={coupling.n}")
    return float(np.tanh(params.beta * config.local_fields[i] + params.b_field))
