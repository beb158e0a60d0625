"""
Comparison of magnetization laws against their limit laws.

Handles:
- Limit-law CDFs (Gaussian in closed form, quartic laws by quadrature, the quartic pair by convolution)
- Kolmogorov-Smirnov distance for atomic-vs-continuous and atomic-vs-atomic inputs
- Centering statistics, concentration curves and threshold-event comparisons
- Shift constants of the counterexample families
"""
import logging
import math
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import cumulative_trapezoid, quad
from scipy.special import erfc, logsumexp

from mfising.core.config import settings
from mfising.core.exceptions import (
    EmptySampleError,
    GridCoverageError,
    InfeasibleParametersError,
    RegimeMismatchError,
)
from mfising.schemas.analysis import CenteredSample, EventComparison, EventSide, LimitLaw, LimitLawKind, Statistic
from mfising.schemas.exact import MagnetizationLaw
from mfising.schemas.meanfield import ModelParams, RegimeLabel
from mfising.schemas.sampler import SampleBatch
from mfising.services.meanfield import classify, solve_fixed_point


logger = logging.getLogger(__name__)

Atomic = Union[MagnetizationLaw, CenteredSample]


# ============ Limit laws ============

PAIR_SCALE = 2.0 ** 0.75
PAIR_GRID_RADIUS = 8.0
PAIR_GRID_POINTS = 4001
PAIR_MASS_TOL = 1e-6


def _quartic_log_density(kind: LimitLawKind, x: float) -> float:
    if kind == LimitLawKind.QUARTIC_W:
        return -x ** 4 / 12
    return -x ** 4 / 12 - x ** 2 / math.sqrt(2)


@lru_cache(maxsize=None)
def quartic_normalizer(kind: LimitLawKind) -> float:
    """Integral of the unnormalized quartic density over the real line."""
    kind = LimitLawKind(kind)
    if kind not in (LimitLawKind.QUARTIC_W, LimitLawKind.MODIFIED_W_TILDE):
        raise InfeasibleParametersError("normalizer is defined for the single quartic laws", kind.value)
    half, _ = quad(lambda x: math.exp(_quartic_log_density(kind, x)), 0.0, np.inf, epsabs=settings.QUAD_TOL)
    return 2.0 * half


def _quartic_half_mass(kind: LimitLawKind, radii: np.ndarray) -> np.ndarray:
    """Unnormalized mass of [0, r] for each r >= 0, integrated between sorted radii."""
    order = np.argsort(radii)
    sorted_radii = radii[order]
    pieces = np.empty(sorted_radii.size)
    lower = 0.0
    for k, upper in enumerate(sorted_radii):
        piece, _ = quad(lambda x: math.exp(_quartic_log_density(kind, x)), lower, upper, epsabs=settings.QUAD_TOL)
        pieces[k] = piece
        lower = upper
    masses = np.empty_like(pieces)
    masses[order] = np.cumsum(pieces)
    return masses


@lru_cache(maxsize=None)
def _quartic_pair_grid() -> Tuple[np.ndarray, np.ndarray]:
    """
    Grid CDF of (W1 + W2) / 2^{3/4}.

    The density of W1 + W2 is the self-convolution of the quartic density,
    which is below exp(-341) outside [-8, 8].
    """
    w = np.linspace(-PAIR_GRID_RADIUS, PAIR_GRID_RADIUS, PAIR_GRID_POINTS)
    step = w[1] - w[0]
    density = np.exp(-w ** 4 / 12) / quartic_normalizer(LimitLawKind.QUARTIC_W)
    sums = np.linspace(-2 * PAIR_GRID_RADIUS, 2 * PAIR_GRID_RADIUS, 2 * PAIR_GRID_POINTS - 1)
    cdf = cumulative_trapezoid(np.convolve(density, density) * step, sums, initial=0.0)
    mass = cdf[-1]
    if abs(mass - 1.0) > PAIR_MASS_TOL:
        raise GridCoverageError(f"pair grid carries mass {mass:.12f}")
    return sums / PAIR_SCALE, cdf / mass


def _unshifted_cdf(law: LimitLaw, y: np.ndarray) -> np.ndarray:
    if law.kind == LimitLawKind.GAUSSIAN:
        return 0.5 * erfc(-y / math.sqrt(2.0 * law.tau))
    if law.kind == LimitLawKind.QUARTIC_PAIR:
        grid, cdf = _quartic_pair_grid()
        return np.interp(y, grid, cdf, left=0.0, right=1.0)
    half = _quartic_half_mass(law.kind, np.abs(y)) / quartic_normalizer(law.kind)
    return np.clip(0.5 + np.sign(y) * half, 0.0, 1.0)


def limit_cdf(law: LimitLaw, x):
    """
    CDF of a limit law at x (scalar or array).

    Gaussian laws use the complementary error function; the single quartic
    laws integrate their density outward from the symmetric center and the
    quartic pair interpolates a convolution grid. A mirrored law averages
    the CDFs shifted by +mu and -mu.
    """
    points = np.atleast_1d(np.asarray(x, dtype=float))
    values = _unshifted_cdf(law, points - law.mu)
    if law.mirrored:
        values = 0.5 * (values + _unshifted_cdf(law, points + law.mu))
    if np.ndim(x) == 0:
        return float(values[0])
    return values


def limit_moment(law: LimitLaw, power: int) -> float:
    """E[X^power] of the unshifted law."""
    if power == 0:
        return 1.0
    if power % 2 == 1:
        return 0.0
    if law.kind == LimitLawKind.GAUSSIAN:
        return float(law.tau ** (power / 2) * math.prod(range(power - 1, 0, -2)))
    if law.kind == LimitLawKind.QUARTIC_PAIR:
        single = LimitLaw.quartic_w()
        total = sum(
            math.comb(power, k) * limit_moment(single, k) * limit_moment(single, power - k)
            for k in range(0, power + 1, 2)
        )
        return total / PAIR_SCALE ** power
    half, _ = quad(
        lambda x: x ** power * math.exp(_quartic_log_density(law.kind, x)),
        0.0,
        np.inf,
        epsabs=settings.QUAD_TOL,
    )
    return 2.0 * half / quartic_normalizer(law.kind)


# ============ Centering ============

def center(
    source: Union[SampleBatch, MagnetizationLaw, np.ndarray],
    statistic: Statistic,
    t: float,
    n: Optional[int] = None,
) -> CenteredSample:
    """
    Apply a centering statistic to samples or to an exact law.

    sqrtN_minus_M centers each draw or atom by +t when sigma_bar >= 0 and by -t
    otherwise. `n` is required only for a bare array of sigma_bar values.
    """
    statistic = Statistic(statistic)
    if statistic == Statistic.QUARTER_N and t != 0:
        raise RegimeMismatchError(f"quarterN centering requires t = 0, got t={t}")

    weights = None
    if isinstance(source, MagnetizationLaw):
        n = source.n
        sigma_bar = source.sigma_bar.astype(float)
        weights = source.probs
    elif isinstance(source, SampleBatch):
        n = source.n
        sigma_bar = np.asarray(source.sigma_bar, dtype=float)
    else:
        if n is None:
            raise InfeasibleParametersError("n is required to center a bare array")
        sigma_bar = np.asarray(source, dtype=float)

    if statistic == Statistic.SQRTN_MINUS_T:
        values = math.sqrt(n) * (sigma_bar - t)
    elif statistic == Statistic.SQRTN_MINUS_M:
        values = math.sqrt(n) * (sigma_bar - np.where(sigma_bar >= 0, t, -t))
    else:
        values = n ** 0.25 * sigma_bar
    return CenteredSample(values=values, weights=weights, statistic=statistic, n=n, t=t)


def fold_modes(
    centered: CenteredSample,
    source: Union[SampleBatch, MagnetizationLaw, np.ndarray],
) -> CenteredSample:
    """Multiply each centered value by the sign of its mode, sgn(M(sigma))."""
    if isinstance(source, (MagnetizationLaw, SampleBatch)):
        sigma_bar = np.asarray(source.sigma_bar, dtype=float)
    else:
        sigma_bar = np.asarray(source, dtype=float)
    signs = np.where(sigma_bar >= 0, 1.0, -1.0)
    return centered.model_copy(update={"values": np.asarray(centered.values, dtype=float) * signs})


def _atoms(source: Atomic, statistic: Optional[Statistic], t: float) -> Tuple[np.ndarray, np.ndarray]:
    """Sorted distinct atoms and their masses."""
    if isinstance(source, MagnetizationLaw):
        if statistic is None:
            raise InfeasibleParametersError("a statistic is required to compare an exact law")
        source = center(source, statistic, t)
    if source.is_empty:
        raise EmptySampleError("cannot compare an empty sample")
    values = np.asarray(source.values, dtype=float)
    if source.weights is None:
        weights = np.full(values.size, 1.0 / values.size)
    else:
        weights = np.asarray(source.weights, dtype=float)
    atoms, inverse = np.unique(values, return_inverse=True)
    return atoms, np.bincount(inverse, weights=weights, minlength=atoms.size)


# ============ Distances ============

def ks_distance(
    lhs: Atomic,
    rhs: Union[LimitLaw, Atomic],
    statistic: Optional[Statistic] = None,
    t: float = 0.0,
) -> float:
    """
    sup_x |F_lhs(x) - F_rhs(x)|.

    Exact laws are first centered with (statistic, t). Against a continuous
    law the sup is taken over both one-sided limits at every atom; between
    two atomic inputs it is taken at every atom of either.
    """
    atoms, masses = _atoms(lhs, statistic, t)
    right = np.minimum(np.cumsum(masses), 1.0)

    if isinstance(rhs, LimitLaw):
        left = right - masses
        reference = limit_cdf(rhs, atoms)
        return float(max(np.max(np.abs(right - reference)), np.max(np.abs(left - reference))))

    other_atoms, other_masses = _atoms(rhs, statistic, t)
    other_right = np.minimum(np.cumsum(other_masses), 1.0)
    grid = np.union1d(atoms, other_atoms)
    mine = _step_values(atoms, right, grid)
    theirs = _step_values(other_atoms, other_right, grid)
    return float(np.max(np.abs(mine - theirs)))


def _step_values(atoms: np.ndarray, cumulative: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Right-continuous step CDF evaluated on grid."""
    positions = np.searchsorted(atoms, grid, side="right")
    padded = np.concatenate([[0.0], cumulative])
    return padded[positions]


def dkw_epsilon(count: int, alpha: float = 0.01) -> float:
    """Half-width of the Dvoretzky-Kiefer-Wolfowitz band at level 1 - alpha."""
    if count <= 0:
        raise EmptySampleError("DKW band needs at least one draw")
    return math.sqrt(math.log(2.0 / alpha) / (2.0 * count))


# ============ Law summaries ============

def law_moments(source: Union[MagnetizationLaw, CenteredSample, np.ndarray]) -> Tuple[float, float]:
    """(mean, variance) of sigma_bar for a law, of the values for a sample."""
    if isinstance(source, MagnetizationLaw):
        return source.mean(), source.variance()
    if isinstance(source, CenteredSample):
        values, weights = np.asarray(source.values, dtype=float), source.weights
    else:
        values, weights = np.asarray(source, dtype=float), None
    if values.size == 0:
        raise EmptySampleError("cannot summarize an empty sample")
    mean = float(np.average(values, weights=weights))
    return mean, float(np.average((values - mean) ** 2, weights=weights))


def cluster_masses(law: MagnetizationLaw, t: float) -> Tuple[float, float, float]:
    """Masses of |sigma_bar| < t/2, sigma_bar >= t/2 and sigma_bar <= -t/2."""
    half = abs(t) / 2
    sigma_bar = law.sigma_bar
    probs = law.probs
    return (
        float(probs[np.abs(sigma_bar) < half].sum()),
        float(probs[sigma_bar >= half].sum()),
        float(probs[sigma_bar <= -half].sum()),
    )


def _log_mass(law: MagnetizationLaw, mask: np.ndarray) -> float:
    if not np.any(mask):
        return -np.inf
    return float(logsumexp(law.log_probs[mask]))


def concentration_curve(
    law: MagnetizationLaw,
    t: float,
    deltas: Sequence[float],
    use_sign: bool = True,
) -> List[Tuple[float, float]]:
    """
    log P(|sigma_bar - M(sigma)| > delta) for each delta, computed from the atoms.

    With use_sign the center is M(sigma) (+t if sigma_bar >= 0, else -t);
    without it the center is t itself.
    """
    deltas = np.asarray(deltas, dtype=float)
    if deltas.size and (np.any(deltas <= 0) or np.any(np.diff(deltas) <= 0)):
        raise InfeasibleParametersError("deltas must be positive and increasing")
    sigma_bar = law.sigma_bar
    centers = np.where(sigma_bar >= 0, t, -t) if use_sign else np.full(sigma_bar.shape, t)
    distance = np.abs(sigma_bar - centers)
    return [(float(delta), _log_mass(law, distance > delta)) for delta in deltas]


def event_comparison(
    law_p: MagnetizationLaw,
    law_ref: MagnetizationLaw,
    side: EventSide,
    level: float,
) -> EventComparison:
    """
    Log-probabilities of {sigma_bar > level} (above) or {sigma_bar < level} (below)
    under a model law and a reference law.
    """
    if law_p.n != law_ref.n:
        raise InfeasibleParametersError("laws must share n", f"{law_p.n} != {law_ref.n}")
    side = EventSide(side)

    def event(law: MagnetizationLaw) -> np.ndarray:
        return law.sigma_bar > level if side == EventSide.ABOVE else law.sigma_bar < level

    log_p = _log_mass(law_p, event(law_p))
    log_ref = _log_mass(law_ref, event(law_ref))
    if np.isneginf(log_p) and np.isneginf(log_ref):
        return EventComparison(log_p=log_p, log_ref=log_ref, gap=0.0)
    if np.isneginf(log_ref):
        logger.warning(f"reference event {side.value} {level} has probability zero")
        return EventComparison(log_p=log_p, log_ref=log_ref, gap=math.inf, reference_null=True)
    return EventComparison(log_p=log_p, log_ref=log_ref, gap=log_p - log_ref)


# ============ Rates and counterexamples ============

def fit_rate_constant(
    ns: Sequence[int],
    ks: Sequence[float],
    rate: str = "sqrt_n",
) -> Tuple[float, List[float]]:
    """
    Fit C in ks ~ C / rate(n) on the smallest n.

    Returns:
        (constant, ratios): the fitted constant and every ks * rate(n) divided by it
    """
    ns = np.asarray(ns, dtype=float)
    ks = np.asarray(ks, dtype=float)
    if ns.size == 0 or ns.shape != ks.shape:
        raise InfeasibleParametersError("ns and ks must be nonempty and of equal length")
    if rate == "sqrt_n":
        scaled = ks * np.sqrt(ns)
    elif rate == "sqrt_n_over_log_n":
        scaled = ks * np.sqrt(ns) / np.log(ns)
    else:
        raise InfeasibleParametersError("rate must be sqrt_n or sqrt_n_over_log_n", rate)
    order = np.argsort(ns)
    constant = float(scaled[order[0]])
    if constant == 0:
        raise InfeasibleParametersError("fitted constant is zero")
    return constant, [float(v) for v in scaled / constant]


def counterexample_mu(beta: float, b_field: float, which: str) -> float:
    """
    Shift constant of a counterexample family.

    line_graph: beta t / (sqrt(2) (1 - beta(1 - t^2)) (2 - beta(1 - t^2))), off criticality.
    regularity_b: beta t (1 - t^2) / (1 - beta(1 - t^2)), for B != 0.
    regularity_a: regularity_b + tanh(B) - t, for B != 0.
    """
    params = ModelParams(beta=beta, b_field=b_field)
    if which == "line_graph":
        regime = classify(params)
        if regime.label == RegimeLabel.THETA3:
            raise RegimeMismatchError("the line-graph shift is undefined at the critical point")
        t = regime.t
        curvature = 1 - beta * (1 - t ** 2)
        return beta * t / (math.sqrt(2) * curvature * (1 + curvature))
    if which in ("regularity_a", "regularity_b"):
        if b_field == 0:
            raise RegimeMismatchError(f"{which} requires a nonzero field")
        t = solve_fixed_point(params)
        mu = beta * t * (1 - t ** 2) / (1 - beta * (1 - t ** 2))
        if which == "regularity_a":
            mu += math.tanh(b_field) - t
        return mu
    raise InfeasibleParametersError("which must be line_graph, regularity_a or regularity_b", which)
