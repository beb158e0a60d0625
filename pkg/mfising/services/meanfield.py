"""
Mean-field fixed point, regime classification and the mean-field
prediction of the log-partition function.
"""
import logging
import math

import numpy as np
from scipy.optimize import bisect
from scipy.special import xlogy

from mfising.core.config import settings
from mfising.core.exceptions import InfeasibleParametersError, MeanFieldInconsistencyError
from mfising.schemas.coupling import CouplingMatrix, MatrixDiagnostics
from mfising.schemas.meanfield import ModelParams, Regime, RegimeLabel
from mfising.services.coupling import rate_terms


logger = logging.getLogger(__name__)

NEAR_CRITICAL = 1e-6


def _phi(x: float, beta: float, b_field: float) -> float:
    return x - np.tanh(beta * x + b_field)


def _positive_root(beta: float, b_field: float) -> float:
    """Root of x = tanh(beta x + B) in (0, 1) for B >= 0."""
    lower = 0.0 if b_field > 0 else 1e-15
    if _phi(lower, beta, b_field) >= 0:
        # zero-field root below bisection resolution; t^2 ~ 3 (beta - 1) as beta -> 1+
        return math.sqrt(3.0 * (beta - 1.0))
    if _phi(1.0, beta, b_field) <= 0:
        return float(np.nextafter(1.0, 0.0))
    return bisect(
        _phi,
        lower,
        1.0,
        args=(beta, b_field),
        xtol=1e-16,
        rtol=4 * np.finfo(float).eps,
        maxiter=500,
    )


def solve_fixed_point(params: ModelParams) -> float:
    """
    Solve t = tanh(beta t + B).

    Zero field below or at beta = 1 gives t = 0; zero field above gives the
    positive root; a negative field is solved by reflection.
    """
    beta, b_field = params.beta, params.b_field
    if b_field == 0:
        t = 0.0 if beta <= 1 else _positive_root(beta, 0.0)
    elif b_field > 0:
        t = _positive_root(beta, b_field)
    else:
        t = -_positive_root(beta, -b_field)

    residual = abs(_phi(t, beta, b_field))
    if residual >= settings.FIXED_POINT_TOL:
        logger.warning(f"fixed point residual {residual:.3e} at beta={beta}, B={b_field}")
    return float(t)


def phi_prime(t: float, params: ModelParams) -> float:
    """phi'(t) = 1 - beta (1 - tanh^2(beta t + B))."""
    return float(1.0 - params.beta * (1.0 - np.tanh(params.beta * t + params.b_field) ** 2))


def classify(params: ModelParams) -> Regime:
    """Regime label, fixed point, phi'(t) and the limit variance tau."""
    beta, b_field = params.beta, params.b_field
    if b_field != 0:
        label = RegimeLabel.THETA12
    elif beta < 1:
        label = RegimeLabel.THETA11
    elif beta > 1:
        label = RegimeLabel.THETA2
    else:
        label = RegimeLabel.THETA3

    if label != RegimeLabel.THETA3 and b_field == 0 and abs(beta - 1) < NEAR_CRITICAL:
        logger.warning(f"beta={beta} is within {NEAR_CRITICAL} of the critical point; classified {label.value}")

    t = solve_fixed_point(params)
    derivative = phi_prime(t, params)
    if label == RegimeLabel.THETA2 and derivative <= 0:
        # cancellation in 1 - beta (1 - t^2) just above beta = 1
        derivative = 2.0 * (beta - 1.0)
    tau = None if label == RegimeLabel.THETA3 else (1 - t ** 2) / derivative
    return Regime(
        label=label,
        beta=beta,
        b_field=b_field,
        t=t,
        phi_prime=derivative,
        tau=tau,
    )


def binary_entropy(x: float) -> float:
    """
    I(x) = ((1+x)/2) log((1+x)/2) + ((1-x)/2) log((1-x)/2), with 0 log 0 = 0.

    Nonpositive, even, and equal to -log 2 at the origin.
    """
    if abs(x) > 1:
        raise InfeasibleParametersError("|x| <= 1", f"x={x}")
    plus, minus = (1 + x) / 2, (1 - x) / 2
    return float(xlogy(plus, plus) + xlogy(minus, minus))


def mean_field_prediction(coupling: CouplingMatrix, params: ModelParams) -> float:
    """M_N = N (beta t^2/2 + B t - I(t)) + (beta t^2/2) sum_i (R_i - 1)."""
    t = solve_fixed_point(params)
    beta, b_field = params.beta, params.b_field
    half_energy = beta * t ** 2 / 2
    deviation = float(np.sum(coupling.row_sums() - 1.0))
    return coupling.n * (half_energy + b_field * t - binary_entropy(t)) + half_energy * deviation


def mean_field_gap(coupling: CouplingMatrix, params: ModelParams, log_z: float) -> float:
    """
    log Z_N - M_N, which the variational lower bound keeps nonnegative.

    Raises:
        MeanFieldInconsistencyError: if the gap is below -MEAN_FIELD_SLACK
    """
    gap = log_z - mean_field_prediction(coupling, params)
    if gap < -settings.MEAN_FIELD_SLACK:
        logger.error(f"mean-field gap {gap:.3e} for {coupling.label}")
        raise MeanFieldInconsistencyError(gap)
    return float(gap)


def mean_field_error_bound(diag: MatrixDiagnostics, regime: Regime) -> float:
    """Right-hand side of the partition-function bound for the regime."""
    terms = rate_terms(diag, regime.t, diag.n)
    if regime.is_critical:
        return terms.partition_critical
    return terms.eta
