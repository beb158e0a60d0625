"""
Samplers for the Ising model, the Curie-Weiss auxiliary mixture and the limit laws.

Handles:
- Random-scan Glauber (heat-bath) updates with O(degree) local-field upkeep
- Independent chains on a thread pool, merged in chain order
- Exact i.i.d. Curie-Weiss draws through the auxiliary variable W_N
- Rejection samplers for the quartic limit laws
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid, simpson
from scipy.special import expit

from mfising.core.config import settings
from mfising.core.exceptions import GridCoverageError, InfeasibleParametersError, SizeLimitError
from mfising.schemas.analysis import LimitLaw, LimitLawKind
from mfising.schemas.coupling import CouplingMatrix
from mfising.schemas.exact import SpinConfiguration
from mfising.schemas.meanfield import ModelParams
from mfising.schemas.sampler import ChainState, InitKind, SampleBatch, SamplerConfig
from mfising.services.exact import enumerate_configurations
from mfising.services.meanfield import solve_fixed_point


logger = logging.getLogger(__name__)

# log of max_x exp(-x^4/12 + x^2/4), attained at x^2 = 3/2
QUARTIC_ENVELOPE_LOG_CONSTANT = 3.0 / 16.0
AUX_INITIAL_POINTS = 4097
AUX_MAX_POINTS = (1 << 22) + 1


# ============ Glauber dynamics ============

def chain_rng(master_seed: int, chain_index: int) -> np.random.Generator:
    """Independent stream for chain `chain_index`, derived from the master seed."""
    return np.random.default_rng(np.random.SeedSequence([master_seed, chain_index]))


def init_state(
    coupling: CouplingMatrix,
    params: ModelParams,
    init: InitKind,
    master_seed: int,
    chain_index: int = 0,
) -> ChainState:
    rng = chain_rng(master_seed, chain_index)
    n = coupling.n
    init = InitKind(init)
    if init == InitKind.ALL_PLUS:
        spins = np.ones(n, dtype=np.int8)
    elif init == InitKind.ALL_MINUS:
        spins = -np.ones(n, dtype=np.int8)
    else:
        mean = solve_fixed_point(params) if init == InitKind.COLD_AT_T else 0.0
        spins = np.where(rng.random(n) < (1 + mean) / 2, 1, -1).astype(np.int8)
    config = SpinConfiguration.from_spins(coupling, spins)
    return ChainState(config=config, chain_index=chain_index, rng=rng)


def glauber_step(coupling: CouplingMatrix, params: ModelParams, state: ChainState) -> ChainState:
    """
    One random-scan heat-bath update.

    Site I is uniform on {0, ..., n-1} and sigma_I is redrawn as +1 with
    probability (1 + tanh(beta m_I + B)) / 2.
    """
    config = state.config
    i = int(state.rng.integers(coupling.n))
    p_plus = (1.0 + np.tanh(params.beta * config.local_fields[i] + params.b_field)) / 2
    value = 1 if state.rng.random() < p_plus else -1
    config.set_spin(coupling, i, value)
    state.steps += 1
    return state


def run_steps(coupling: CouplingMatrix, params: ModelParams, state: ChainState, steps: int) -> ChainState:
    """`steps` Glauber updates with the site and uniform draws batched up front."""
    if steps <= 0:
        return state
    rng = state.rng
    sites = rng.integers(coupling.n, size=steps)
    uniforms = rng.random(steps)
    spins = state.config.spins
    fields = state.config.local_fields
    beta, b_field = params.beta, params.b_field
    neighbors = [coupling.neighbors(i) for i in range(coupling.n)]

    for i, u in zip(sites.tolist(), uniforms.tolist()):
        value = 1 if u < (1.0 + math.tanh(beta * fields[i] + b_field)) / 2 else -1
        old = int(spins[i])
        if value != old:
            spins[i] = value
            idx, weights = neighbors[i]
            fields[idx] += weights * (value - old)
    state.steps += steps
    return state


def _sample_chain(
    coupling: CouplingMatrix,
    params: ModelParams,
    cfg: SamplerConfig,
    chain_index: int,
) -> np.ndarray:
    n = coupling.n
    state = init_state(coupling, params, cfg.init, cfg.master_seed, chain_index)
    run_steps(coupling, params, state, cfg.burn_in_sweeps * n)
    draws = np.empty(cfg.n_samples)
    for k in range(cfg.n_samples):
        run_steps(coupling, params, state, cfg.thin_sweeps * n)
        draws[k] = state.config.sigma_bar
    drift = state.config.max_field_error(coupling)
    if drift > 1e-8:
        logger.warning(f"chain {chain_index}: local fields drifted by {drift:.3e}")
    logger.info(f"chain {chain_index} finished after {state.sweep_count} sweeps on {coupling.label}")
    return draws


def sample_ising(coupling: CouplingMatrix, params: ModelParams, cfg: SamplerConfig) -> SampleBatch:
    """
    Glauber samples of sigma_bar per chain after burn-in, with thinning.

    m_sign is sign(sigma_bar) with 0 mapped to +1. Chains are never pooled
    here; callers center per sample and may split by chain.
    """
    workers = min(settings.THREADS, cfg.n_chains)
    indices = range(cfg.n_chains)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            per_chain = list(executor.map(lambda c: _sample_chain(coupling, params, cfg, c), indices))
    else:
        per_chain = [_sample_chain(coupling, params, cfg, c) for c in indices]

    sigma_bar = np.concatenate(per_chain)
    return SampleBatch(
        n=coupling.n,
        chain=np.repeat(np.arange(cfg.n_chains), cfg.n_samples),
        draw=np.tile(np.arange(cfg.n_samples), cfg.n_chains),
        sigma_bar=sigma_bar,
        m_sign=np.where(sigma_bar >= 0, 1, -1).astype(np.int8),
        label=f"glauber({coupling.label}, beta={params.beta}, B={params.b_field})",
    )


def glauber_transition_matrix(coupling: CouplingMatrix, params: ModelParams) -> np.ndarray:
    """
    The 2^n x 2^n kernel of one random-scan step, states in binary order.

    Row x holds P(x -> y); y differs from x in at most one site.
    """
    n = coupling.n
    if n > settings.TRANSITION_MAX_SITES:
        raise SizeLimitError("transition matrix", n, settings.TRANSITION_MAX_SITES, "TRANSITION_MAX_SITES")
    spins = enumerate_configurations(n)
    size = spins.shape[0]
    fields = spins.astype(float) @ coupling.to_dense()
    p_plus = expit(2.0 * (params.beta * fields + params.b_field))
    p_keep = np.where(spins > 0, p_plus, 1.0 - p_plus)

    matrix = np.zeros((size, size))
    codes = np.arange(size)
    for i in range(n):
        flipped = codes ^ (1 << (n - 1 - i))
        matrix[codes, flipped] += (1.0 - p_keep[:, i]) / n
        matrix[codes, codes] += p_keep[:, i] / n
    return matrix


# ============ Curie-Weiss auxiliary sampler ============

def _aux_log_density(w: np.ndarray, n: int, params: ModelParams) -> np.ndarray:
    """-n f(w) with f(w) = beta w^2 / 2 - log cosh(beta w + B)."""
    h = params.beta * w + params.b_field
    log_cosh = np.logaddexp(h, -h) - np.log(2.0)
    return -n * (params.beta * w ** 2 / 2 - log_cosh)


def _aux_grid(n: int, params: ModelParams) -> Tuple[np.ndarray, np.ndarray]:
    """Grid and CDF of W_N, refined by doubling until the Simpson mass settles."""
    half_width = 1.0 + 10.0 / np.sqrt(n * params.beta)
    points = AUX_INITIAL_POINTS
    previous = None
    while True:
        grid = np.linspace(-half_width, half_width, points)
        log_density = _aux_log_density(grid, n, params)
        peak = log_density.max()
        density = np.exp(log_density - peak)
        mass = simpson(density, x=grid)
        if previous is not None and abs(mass - previous) <= settings.AUX_GRID_TOL * mass:
            break
        if points >= AUX_MAX_POINTS:
            logger.warning(f"auxiliary grid stopped at {points} points before settling")
            break
        previous = mass
        points = 2 * points - 1

    # Laplace estimate of the tails beyond the grid, f'(w) = beta (w - tanh(beta w + B))
    slope_right = params.beta * (half_width - np.tanh(params.beta * half_width + params.b_field))
    slope_left = params.beta * (half_width + np.tanh(-params.beta * half_width + params.b_field))
    missing = (density[-1] / (n * slope_right) + density[0] / (n * slope_left)) / mass
    if missing > settings.AUX_MASS_TOL:
        raise GridCoverageError(float(missing))

    cdf = cumulative_trapezoid(density, x=grid, initial=0.0)
    return grid, cdf / cdf[-1]


def sample_cw_auxiliary(n: int, params: ModelParams, cfg: SamplerConfig) -> np.ndarray:
    """
    Exact i.i.d. Curie-Weiss draws of sigma_bar.

    W_N is drawn by inverting its grid CDF, then the n spins are i.i.d. with
    mean tanh(beta W_N + B), so only their count of +1 is drawn.
    """
    if n < 1:
        raise InfeasibleParametersError("n >= 1", f"n={n}")
    if n > settings.CW_MAX_SITES:
        raise SizeLimitError("auxiliary sampler", n, settings.CW_MAX_SITES, "CW_MAX_SITES")
    grid, cdf = _aux_grid(n, params)
    rng = chain_rng(cfg.master_seed, 0)
    w = np.interp(rng.random(cfg.n_samples), cdf, grid)
    plus = rng.binomial(n, expit(2.0 * (params.beta * w + params.b_field)))
    logger.info(f"Drew {cfg.n_samples} auxiliary Curie-Weiss samples at n={n}")
    return (2 * plus - n) / n


# ============ Limit laws ============

def draw_by_rejection(kind: LimitLawKind, count: int, rng: np.random.Generator) -> Tuple[np.ndarray, int]:
    """
    Rejection sampler for the quartic laws from a Gaussian envelope.

    Returns:
        (draws, proposals): `count` accepted draws and the number of proposals used
    """
    kind = LimitLawKind(kind)
    if kind == LimitLawKind.QUARTIC_W:
        scale = np.sqrt(2.0)

        def log_accept(x):
            return -x ** 4 / 12 + x ** 2 / 4 - QUARTIC_ENVELOPE_LOG_CONSTANT
    elif kind == LimitLawKind.MODIFIED_W_TILDE:
        scale = np.sqrt(1.0 / np.sqrt(2.0))

        def log_accept(x):
            return -x ** 4 / 12
    else:
        raise InfeasibleParametersError("rejection sampling applies to the quartic laws", kind.value)

    accepted = []
    total, proposals = 0, 0
    batch = max(count, 1024)
    while total < count:
        x = rng.normal(0.0, scale, batch)
        hits = np.flatnonzero(np.log(rng.random(batch)) < log_accept(x))
        needed = count - total
        if hits.size >= needed:
            # stop counting at the proposal that completed the draw
            accepted.append(x[hits[:needed]])
            proposals += int(hits[needed - 1]) + 1
            total = count
        else:
            accepted.append(x[hits])
            proposals += batch
            total += hits.size
    draws = np.concatenate(accepted)
    logger.debug(f"{kind.value}: acceptance {count / proposals:.3f}")
    return draws, proposals


def sample_limit_law(law: LimitLaw, count: int, seed: int) -> np.ndarray:
    """I.i.d. draws from a limit law, shifted by law.mu or by a random sign times it when mirrored."""
    if count <= 0:
        raise InfeasibleParametersError("count > 0", f"count={count}")
    rng = np.random.default_rng(seed)
    if law.kind == LimitLawKind.GAUSSIAN:
        base = rng.normal(0.0, np.sqrt(law.tau), count)
    elif law.kind == LimitLawKind.QUARTIC_PAIR:
        first, _ = draw_by_rejection(LimitLawKind.QUARTIC_W, count, rng)
        second, _ = draw_by_rejection(LimitLawKind.QUARTIC_W, count, rng)
        base = (first + second) / 2.0 ** 0.75
    else:
        base, _ = draw_by_rejection(law.kind, count, rng)
    if law.mirrored:
        return base + law.mu * rng.choice([-1.0, 1.0], size=count)
    return base + law.mu
