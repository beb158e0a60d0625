import numpy as np
import pytest

from mfising.core.config import settings
from mfising.core.exceptions import InfeasibleParametersError, SizeLimitError
from mfising.schemas.analysis import CenteredSample, LimitLaw, LimitLawKind, Statistic
from mfising.schemas.meanfield import ModelParams
from mfising.schemas.sampler import InitKind, SamplerConfig
from mfising.services import analysis, exact, meanfield, sampler
from mfising.services import coupling as builders


def test_chain_rng_streams():
    first = sampler.chain_rng(42, 0).random(5)
    again = sampler.chain_rng(42, 0).random(5)
    other = sampler.chain_rng(42, 1).random(5)
    np.testing.assert_array_equal(first, again)
    assert not np.allclose(first, other)


@pytest.mark.parametrize("init,expected", [(InitKind.ALL_PLUS, 1.0), (InitKind.ALL_MINUS, -1.0)])
def test_init_state_deterministic_kinds(small_complete, high_temperature, init, expected):
    state = sampler.init_state(small_complete, high_temperature, init, master_seed=1)
    assert state.config.sigma_bar == expected
    assert state.steps == 0


def test_glauber_step_keeps_local_fields(with_field):
    coupling = builders.build_erdos_renyi(20, 0.3, seed=6)
    state = sampler.init_state(coupling, with_field, InitKind.RANDOM, master_seed=3)
    for _ in range(200):
        sampler.glauber_step(coupling, with_field, state)
    assert state.steps == 200
    assert state.config.max_field_error(coupling) < 1e-12


def test_run_steps_keeps_local_fields(with_field):
    coupling = builders.build_wigner(25, seed=2)
    state = sampler.init_state(coupling, with_field, InitKind.COLD_AT_T, master_seed=3)
    sampler.run_steps(coupling, with_field, state, 5000)
    assert state.sweep_count == 200
    assert state.config.max_field_error(coupling) < 1e-10


def test_transition_matrix_is_stochastic(with_field):
    coupling = builders.build_complete(4)
    kernel = sampler.glauber_transition_matrix(coupling, with_field)
    assert kernel.shape == (16, 16)
    np.testing.assert_allclose(kernel.sum(axis=1), np.ones(16), atol=1e-14)
    assert np.all(kernel >= 0)


def test_gibbs_measure_is_stationary(with_field):
    coupling = builders.build_erdos_renyi(5, 0.7, seed=1)
    kernel = sampler.glauber_transition_matrix(coupling, with_field)
    _, probs = exact.configuration_law_bruteforce(coupling, with_field)
    np.testing.assert_allclose(probs @ kernel, probs, atol=1e-14)


def test_kernel_is_reversible(with_field):
    coupling = builders.build_block_spin(4, 1.0, 0.3)
    kernel = sampler.glauber_transition_matrix(coupling, with_field)
    _, probs = exact.configuration_law_bruteforce(coupling, with_field)
    flow = probs[:, None] * kernel
    np.testing.assert_allclose(flow, flow.T, atol=1e-15)


def test_transition_matrix_cap(monkeypatch, small_complete, high_temperature):
    monkeypatch.setattr(settings, "TRANSITION_MAX_SITES", 5)
    with pytest.raises(SizeLimitError):
        sampler.glauber_transition_matrix(small_complete, high_temperature)


def test_sample_ising_layout(small_complete, with_field):
    cfg = SamplerConfig(burn_in_sweeps=10, n_samples=30, n_chains=3, master_seed=9)
    batch = sampler.sample_ising(small_complete, with_field, cfg)
    assert len(batch) == 90
    assert batch.chain.tolist() == [0] * 30 + [1] * 30 + [2] * 30
    assert batch.draw.tolist() == list(range(30)) * 3
    np.testing.assert_array_equal(batch.m_sign, np.where(batch.sigma_bar >= 0, 1, -1))
    assert set(np.round(batch.sigma_bar * 6).astype(int).tolist()) <= {-6, -4, -2, 0, 2, 4, 6}


def test_sample_ising_is_reproducible_across_thread_counts(small_complete, with_field, threads):
    cfg = SamplerConfig(burn_in_sweeps=5, n_samples=20, n_chains=4, master_seed=11)
    serial = sampler.sample_ising(small_complete, with_field, cfg)
    threads(4)
    parallel = sampler.sample_ising(small_complete, with_field, cfg)
    np.testing.assert_array_equal(serial.sigma_bar, parallel.sigma_bar)


def test_zero_magnetization_counts_as_plus(high_temperature):
    coupling = builders.build_complete(2)
    cfg = SamplerConfig(burn_in_sweeps=1, n_samples=200, master_seed=1)
    batch = sampler.sample_ising(coupling, high_temperature, cfg)
    zero = batch.sigma_bar == 0
    assert zero.any()
    assert np.all(batch.m_sign[zero] == 1)


@pytest.mark.slow
def test_glauber_matches_exact_magnetization_law(with_field):
    coupling = builders.build_regular(10, 4, seed=21)
    cfg = SamplerConfig(burn_in_sweeps=100, thin_sweeps=20, n_samples=10000, n_chains=2, master_seed=5)
    batch = sampler.sample_ising(coupling, with_field, cfg)
    law = exact.magnetization_law_bruteforce(coupling, with_field)
    counts = np.array([(np.round(batch.sigma_bar * 10) == s).sum() for s in law.support])
    total = len(batch)
    expected = law.probs * total
    kept = expected > 20
    # multinomial standard error of each atom count
    error = np.sqrt(total * law.probs[kept] * (1 - law.probs[kept]))
    z = (counts[kept] - expected[kept]) / error
    assert np.max(np.abs(z)) < 3, f"per-atom z: {np.round(z, 2).tolist()}"


@pytest.mark.parametrize("init,sign", [(InitKind.ALL_PLUS, 1.0), (InitKind.ALL_MINUS, -1.0)])
def test_low_temperature_chains_stay_in_their_mode(init, sign):
    params = ModelParams(beta=1.5)
    t = meanfield.solve_fixed_point(params)
    coupling = builders.build_complete(100)
    cfg = SamplerConfig(burn_in_sweeps=20, n_samples=200, n_chains=2, master_seed=13, init=init)
    batch = sampler.sample_ising(coupling, params, cfg)
    for chain in range(cfg.n_chains):
        sigma_bar = batch.for_chain(chain).sigma_bar
        assert np.all(np.sign(sigma_bar) == sign)
        assert np.mean(sigma_bar) == pytest.approx(sign * t, abs=0.05)


def test_auxiliary_sampler_is_seeded(high_temperature):
    cfg = SamplerConfig(n_samples=500, master_seed=3)
    first = sampler.sample_cw_auxiliary(100, high_temperature, cfg)
    second = sampler.sample_cw_auxiliary(100, high_temperature, cfg)
    np.testing.assert_array_equal(first, second)
    assert set(np.round(first * 100).astype(int) % 2) == {0}


@pytest.mark.parametrize("params", [ModelParams(beta=0.8, b_field=0.1), ModelParams(beta=1.5)])
def test_auxiliary_sampler_matches_exact_law(params):
    cfg = SamplerConfig(n_samples=1_000_000, master_seed=17)
    draws = sampler.sample_cw_auxiliary(12, params, cfg)
    law = exact.magnetization_law_cw(12, params)
    sample = CenteredSample(values=draws, statistic=Statistic.SQRTN_MINUS_T, n=12)
    exact_atoms = CenteredSample(values=law.sigma_bar, weights=law.probs, statistic=Statistic.SQRTN_MINUS_T, n=12)
    distance = analysis.ks_distance(sample, exact_atoms)
    assert distance < analysis.dkw_epsilon(cfg.n_samples, alpha=0.01)


def test_auxiliary_sampler_size_cap(monkeypatch, high_temperature):
    monkeypatch.setattr(settings, "CW_MAX_SITES", 50)
    with pytest.raises(SizeLimitError):
        sampler.sample_cw_auxiliary(51, high_temperature, SamplerConfig())


def test_quartic_rejection_acceptance():
    rng = np.random.default_rng(0)
    draws, proposals = sampler.draw_by_rejection(LimitLawKind.QUARTIC_W, 20000, rng)
    assert draws.size == 20000
    assert draws.size / proposals >= 0.5
    # Z / (exp(3/16) sqrt(4 pi)) for the N(0, 2) envelope
    expected = analysis.quartic_normalizer(LimitLawKind.QUARTIC_W) / (np.exp(3 / 16) * np.sqrt(4 * np.pi))
    assert draws.size / proposals == pytest.approx(expected, abs=0.02)
    second_moment = analysis.limit_moment(LimitLaw.quartic_w(), 2)
    assert np.mean(draws ** 2) == pytest.approx(second_moment, abs=0.05)
    assert np.mean(draws) == pytest.approx(0.0, abs=0.03)


def test_quartic_draws_follow_the_law():
    draws = sampler.sample_limit_law(LimitLaw.quartic_w(), 4000, seed=2)
    sample = CenteredSample(values=draws, statistic=Statistic.QUARTER_N, n=1)
    assert analysis.ks_distance(sample, LimitLaw.quartic_w()) < analysis.dkw_epsilon(4000, alpha=1e-6)


def test_modified_law_draws_follow_the_law():
    law = LimitLaw.modified_w_tilde().shifted(0.5)
    draws = sampler.sample_limit_law(law, 4000, seed=4)
    sample = CenteredSample(values=draws, statistic=Statistic.SQRTN_MINUS_T, n=1)
    assert analysis.ks_distance(sample, law) < analysis.dkw_epsilon(4000, alpha=1e-6)


def test_quartic_pair_draws_follow_the_law():
    law = LimitLaw.quartic_pair()
    draws = sampler.sample_limit_law(law, 4000, seed=6)
    sample = CenteredSample(values=draws, statistic=Statistic.QUARTER_N, n=1)
    assert analysis.ks_distance(sample, law) < analysis.dkw_epsilon(4000, alpha=1e-6)


def test_mirrored_draws_follow_the_mixture():
    law = LimitLaw.gaussian(0.5).shifted(-1.0).mirror()
    draws = sampler.sample_limit_law(law, 4000, seed=8)
    sample = CenteredSample(values=draws, statistic=Statistic.SQRTN_MINUS_M, n=1)
    assert analysis.ks_distance(sample, law) < analysis.dkw_epsilon(4000, alpha=1e-6)
    assert np.mean(draws > 0) == pytest.approx(0.5, abs=0.05)


def test_gaussian_draws_are_shifted():
    draws = sampler.sample_limit_law(LimitLaw.gaussian(2.0).shifted(-1.0), 20000, seed=1)
    assert np.mean(draws) == pytest.approx(-1.0, abs=0.05)
    assert np.var(draws) == pytest.approx(2.0, rel=0.05)


def test_rejection_refuses_gaussian():
    with pytest.raises(InfeasibleParametersError):
        sampler.draw_by_rejection(LimitLawKind.GAUSSIAN, 10, np.random.default_rng(0))


def test_limit_law_count_must_be_positive():
    with pytest.raises(InfeasibleParametersError, match="count > 0"):
        sampler.sample_limit_law(LimitLaw.quartic_w(), 0, seed=1)
