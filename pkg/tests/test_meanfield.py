import math

import numpy as np
import pytest

from mfising.core.exceptions import InfeasibleParametersError, MeanFieldInconsistencyError
from mfising.schemas.meanfield import ModelParams, RegimeLabel
from mfising.services import coupling as builders
from mfising.services import exact, meanfield


@pytest.mark.parametrize("beta", [0.2, 0.5, 0.99, 1.0])
def test_zero_field_high_temperature_fixed_point_is_zero(beta):
    assert meanfield.solve_fixed_point(ModelParams(beta=beta)) == 0.0


def test_low_temperature_fixed_point():
    t = meanfield.solve_fixed_point(ModelParams(beta=2.0))
    assert t == pytest.approx(0.957504, abs=1e-6)
    assert abs(t - math.tanh(2.0 * t)) < 1e-12


@pytest.mark.parametrize("beta,b_field", [(0.5, 0.3), (1.0, 0.1), (2.0, 0.05), (0.3, 2.0)])
def test_fixed_point_solves_equation(beta, b_field):
    t = meanfield.solve_fixed_point(ModelParams(beta=beta, b_field=b_field))
    assert 0 < t < 1
    assert abs(t - math.tanh(beta * t + b_field)) < 1e-12


def test_negative_field_reflects():
    plus = meanfield.solve_fixed_point(ModelParams(beta=0.7, b_field=0.4))
    minus = meanfield.solve_fixed_point(ModelParams(beta=0.7, b_field=-0.4))
    assert minus == -plus


@pytest.mark.parametrize(
    "beta,b_field,label",
    [
        (0.5, 0.0, RegimeLabel.THETA11),
        (0.5, 0.2, RegimeLabel.THETA12),
        (2.0, -0.2, RegimeLabel.THETA12),
        (1.5, 0.0, RegimeLabel.THETA2),
        (1.0, 0.0, RegimeLabel.THETA3),
    ],
)
def test_classify_labels(beta, b_field, label):
    assert meanfield.classify(ModelParams(beta=beta, b_field=b_field)).label == label


def test_high_temperature_variance():
    regime = meanfield.classify(ModelParams(beta=0.5))
    assert regime.t == 0.0
    assert regime.phi_prime == pytest.approx(0.5)
    assert regime.tau == pytest.approx(2.0)


def test_critical_point_has_no_variance():
    regime = meanfield.classify(ModelParams(beta=1.0))
    assert regime.is_critical
    assert regime.tau is None
    assert regime.phi_prime == pytest.approx(0.0, abs=1e-15)


def test_low_temperature_variance():
    regime = meanfield.classify(ModelParams(beta=2.0))
    assert regime.tau == pytest.approx(0.0998, abs=5e-4)
    assert regime.tau == pytest.approx((1 - regime.t ** 2) / regime.phi_prime)


def test_phi_prime_positive_off_criticality():
    for params in [ModelParams(beta=0.5, b_field=0.3), ModelParams(beta=3.0), ModelParams(beta=1.0, b_field=0.01)]:
        t = meanfield.solve_fixed_point(params)
        assert meanfield.phi_prime(t, params) > 0


@pytest.mark.parametrize("beta", [float(np.nextafter(1.0, 2.0)), 1 + 1e-12, 1 + 1e-9])
def test_just_above_critical_is_low_temperature(beta):
    regime = meanfield.classify(ModelParams(beta=beta))
    assert regime.label == RegimeLabel.THETA2
    assert regime.t > 0
    assert regime.t == pytest.approx(math.sqrt(3 * (beta - 1)), rel=1e-3)
    assert regime.phi_prime > 0
    assert regime.tau > 0


def test_params_reject_nonpositive_beta():
    with pytest.raises(ValueError):
        ModelParams(beta=0.0)


def test_binary_entropy_values():
    assert meanfield.binary_entropy(0.0) == pytest.approx(-math.log(2))
    assert meanfield.binary_entropy(1.0) == 0.0
    assert meanfield.binary_entropy(-1.0) == 0.0
    assert meanfield.binary_entropy(0.3) == pytest.approx(meanfield.binary_entropy(-0.3))
    assert meanfield.binary_entropy(0.3) < 0


def test_binary_entropy_domain():
    with pytest.raises(InfeasibleParametersError, match=r"\|x\| <= 1"):
        meanfield.binary_entropy(1.2)


def test_prediction_at_zero_field_high_temperature(high_temperature):
    coupling = builders.build_complete(10)
    assert meanfield.mean_field_prediction(coupling, high_temperature) == pytest.approx(10 * math.log(2))


@pytest.mark.parametrize(
    "params",
    [ModelParams(beta=0.5), ModelParams(beta=0.8, b_field=0.3), ModelParams(beta=0.4, b_field=-0.5)],
)
def test_mean_field_lower_bound_on_small_instances(small_couplings, params):
    for coupling in small_couplings:
        log_z = exact.partition_function_bruteforce(coupling, params)
        gap = meanfield.mean_field_gap(coupling, params, log_z)
        assert gap >= -1e-9


def test_gap_below_slack_raises(with_field, small_complete):
    prediction = meanfield.mean_field_prediction(small_complete, with_field)
    with pytest.raises(MeanFieldInconsistencyError) as excinfo:
        meanfield.mean_field_gap(small_complete, with_field, prediction - 1.0)
    assert excinfo.value.gap == pytest.approx(-1.0)


def test_error_bound_by_regime(small_complete):
    diag = builders.diagnostics(small_complete)
    critical = meanfield.classify(ModelParams(beta=1.0))
    high = meanfield.classify(ModelParams(beta=0.5))
    terms = builders.rate_terms(diag, 0.0, small_complete.n)
    assert meanfield.mean_field_error_bound(diag, critical) == pytest.approx(terms.partition_critical)
    assert meanfield.mean_field_error_bound(diag, high) == pytest.approx(terms.eta)


def test_gap_bounded_on_complete_graphs(high_temperature):
    gaps = []
    for n in (8, 12, 16):
        coupling = builders.build_complete(n)
        log_z = exact.partition_function_bruteforce(coupling, high_temperature)
        gaps.append(meanfield.mean_field_gap(coupling, high_temperature, log_z))
    assert np.all(np.array(gaps) > 0)
    assert max(gaps) / min(gaps) < 2.0
