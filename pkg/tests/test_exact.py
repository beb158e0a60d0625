import math

import numpy as np
import pytest
from scipy.special import logsumexp

from mfising.core.config import settings
from mfising.core.exceptions import InfeasibleParametersError, SizeLimitError
from mfising.schemas.exact import SpinConfiguration
from mfising.schemas.meanfield import ModelParams
from mfising.services import coupling as builders
from mfising.services import exact, meanfield


def test_two_site_partition_function():
    params = ModelParams(beta=0.7, b_field=0.3)
    coupling = builders.build_complete(2)
    expected = math.log(math.exp(0.7 + 0.6) + math.exp(0.7 - 0.6) + 2 * math.exp(-0.7))
    assert exact.partition_function_bruteforce(coupling, params) == pytest.approx(expected, rel=1e-14)


def test_bruteforce_matches_curie_weiss():
    params = ModelParams(beta=0.7, b_field=0.1)
    coupling = builders.build_complete(10, denominator=10)
    brute = exact.magnetization_law_bruteforce(coupling, params)
    cw = exact.magnetization_law_cw(10, params)
    np.testing.assert_allclose(brute.probs, cw.probs, rtol=1e-10, atol=1e-15)
    assert brute.log_z == pytest.approx(cw.log_z, rel=1e-12)


def test_single_block_matches_curie_weiss():
    params = ModelParams(beta=1.3, b_field=-0.2)
    blocked = exact.magnetization_law_blocked([40], 1 / 40, 0.0, params)
    cw = exact.magnetization_law_cw(40, params)
    np.testing.assert_allclose(blocked.log_probs, cw.log_probs, atol=1e-10)
    assert blocked.log_z == pytest.approx(cw.log_z, rel=1e-12)


def test_two_blocks_match_bruteforce():
    params = ModelParams(beta=1.5)
    brute = exact.magnetization_law_bruteforce(builders.build_two_complete(8), params)
    blocked = exact.magnetization_law_blocked([4, 4], 2 / 8, 0.0, params)
    np.testing.assert_allclose(blocked.probs, brute.probs, rtol=1e-10, atol=1e-15)
    assert blocked.log_z == pytest.approx(brute.log_z, rel=1e-12)


def test_coupled_blocks_match_bruteforce():
    params = ModelParams(beta=0.9, b_field=0.2)
    coupling = builders.build_block_spin(8, 1.0, 0.5)
    row_sum = 3 + 4 * 0.5
    brute = exact.magnetization_law_bruteforce(coupling, params)
    blocked = exact.magnetization_law_blocked([4, 4], 1.0 / row_sum, 0.5 / row_sum, params)
    np.testing.assert_allclose(blocked.probs, brute.probs, rtol=1e-9, atol=1e-15)


def test_blocked_block_cap(monkeypatch):
    monkeypatch.setattr(settings, "BLOCKED_MAX_BLOCKS", 2)
    with pytest.raises(SizeLimitError, match="BLOCKED_MAX_BLOCKS"):
        exact.magnetization_law_blocked([2, 2, 2], 0.5, 0.0, ModelParams(beta=1.0))


def test_blocked_state_cap(monkeypatch):
    monkeypatch.setattr(settings, "BLOCKED_MAX_STATES", 100)
    with pytest.raises(SizeLimitError) as excinfo:
        exact.magnetization_law_blocked([20, 20], 0.05, 0.0, ModelParams(beta=1.0))
    assert excinfo.value.requested == 441


def test_bruteforce_size_cap(monkeypatch, small_complete):
    monkeypatch.setattr(settings, "EXACT_MAX_SITES", 4)
    with pytest.raises(SizeLimitError, match="EXACT_MAX_SITES"):
        exact.partition_function_bruteforce(small_complete, ModelParams(beta=0.5))


def test_curie_weiss_size_cap(monkeypatch):
    monkeypatch.setattr(settings, "CW_MAX_SITES", 100)
    with pytest.raises(SizeLimitError):
        exact.magnetization_law_cw(101, ModelParams(beta=0.5))


def test_curie_weiss_law_is_symmetric_at_zero_field():
    law = exact.magnetization_law_cw(101, ModelParams(beta=1.2))
    np.testing.assert_allclose(law.probs, law.probs[::-1], rtol=1e-12)
    assert law.mean() == pytest.approx(0.0, abs=1e-14)


def test_curie_weiss_support():
    law = exact.magnetization_law_cw(5, ModelParams(beta=0.5))
    assert law.support.tolist() == [-5, -3, -1, 1, 3, 5]
    assert law.probs.sum() == pytest.approx(1.0, abs=1e-14)


def test_low_temperature_law_concentrates_near_fixed_point():
    params = ModelParams(beta=2.0)
    law = exact.magnetization_law_cw(2000, params)
    t = meanfield.solve_fixed_point(params)
    near = np.abs(np.abs(law.sigma_bar) - t) < 0.05
    assert law.probs[near].sum() > 0.999


def test_threaded_enumeration_is_identical(monkeypatch, threads):
    params = ModelParams(beta=0.6, b_field=0.2)
    coupling = builders.build_regular(12, 3, seed=4)
    single = exact.magnetization_law_bruteforce(coupling, params)
    monkeypatch.setattr(settings, "ENUMERATION_CHUNK", 256)
    threads(3)
    chunked = exact.magnetization_law_bruteforce(coupling, params)
    np.testing.assert_allclose(chunked.log_probs, single.log_probs, atol=1e-12)
    assert chunked.log_z == pytest.approx(single.log_z, rel=1e-13)


def test_configuration_law_order_and_mass(with_field):
    coupling = builders.build_complete(5)
    spins, probs = exact.configuration_law_bruteforce(coupling, with_field)
    assert spins.shape == (32, 5)
    assert spins[0].tolist() == [-1] * 5
    assert spins[-1].tolist() == [1] * 5
    assert spins[1].tolist() == [-1, -1, -1, -1, 1]
    assert probs.sum() == pytest.approx(1.0, abs=1e-14)


def test_configuration_law_aggregates_to_magnetization_law(with_field):
    coupling = builders.build_erdos_renyi(7, 0.6, seed=8)
    spins, probs = exact.configuration_law_bruteforce(coupling, with_field)
    law = exact.magnetization_law_bruteforce(coupling, with_field)
    totals = spins.sum(axis=1)
    for s, p in zip(law.support, law.probs):
        assert probs[totals == s].sum() == pytest.approx(p, abs=1e-14)


def test_configuration_law_is_exchangeable_on_complete_graph(high_temperature):
    spins, probs = exact.configuration_law_bruteforce(builders.build_complete(4), high_temperature)
    totals = spins.sum(axis=1)
    for s in np.unique(totals):
        np.testing.assert_allclose(probs[totals == s], probs[totals == s][0], rtol=1e-12)


def test_conditional_mean_matches_enumeration(with_field):
    coupling = builders.build_regular(6, 2, kind="circulant")
    spins, probs = exact.configuration_law_bruteforce(coupling, with_field)
    row = 37
    config = SpinConfiguration.from_spins(coupling, spins[row])
    # the other configuration agreeing off site 0
    partner = row ^ (1 << 5)
    pair = probs[[row, partner]]
    values = spins[[row, partner], 0]
    expected = float(np.dot(pair, values) / pair.sum())
    assert exact.conditional_mean(coupling, config, 0, with_field) == pytest.approx(expected, rel=1e-12)


def test_conditional_mean_checks_site(small_complete, high_temperature):
    config = SpinConfiguration.from_spins(small_complete, np.ones(6))
    with pytest.raises(IndexError):
        exact.conditional_mean(small_complete, config, 6, high_temperature)


def test_iid_reference_law_mean(with_field):
    t = meanfield.solve_fixed_point(with_field)
    law = exact.iid_reference_law(200, with_field, t)
    assert law.mean() == pytest.approx(t, abs=1e-12)
    assert law.variance() == pytest.approx((1 - t ** 2) / 200, rel=1e-10)
    h = with_field.beta * t + with_field.b_field
    assert law.log_z == pytest.approx(200 * math.log(2 * math.cosh(h)))


def test_iid_reference_law_needs_sites(high_temperature):
    with pytest.raises(InfeasibleParametersError, match="n >= 1"):
        exact.iid_reference_law(0, high_temperature, 0.0)


def test_law_log_probs_keep_far_tails():
    law = exact.magnetization_law_cw(4000, ModelParams(beta=0.5))
    assert np.isfinite(law.log_probs).all()
    assert law.log_probs[0] < -1000
    assert logsumexp(law.log_probs) == pytest.approx(0.0, abs=1e-12)
