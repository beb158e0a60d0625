"""Canonical experiments, run end to end through the config loader."""
import pytest

from mfising.services import experiments


def run_named(name):
    config, _ = experiments.load_config(experiments.canonical_config_path(name))
    return experiments.run_experiment(config)


@pytest.mark.parametrize(
    "name",
    [
        "cw-rate",
        "theta2-centering",
        "disjoint-limit",
        "disjoint-critical",
        "meanfield-gap",
        "concentration",
        "line-graph-spectrum",
    ],
)
def test_canonical_experiment_passes(name):
    result = run_named(name)
    failed = [check.name for check in result.checks if check.gating and not check.passed]
    assert not failed
    assert result.passed


def test_cw_rate_constant_is_stable():
    result = run_named("cw-rate")
    scaled = [row["ks_times_sqrt_n"] for row in result.rows]
    assert max(scaled) / min(scaled) < 1.4
    assert all(row["ks"] > 0 for row in result.rows)


def test_disjoint_blocks_split_mass():
    [row] = run_named("disjoint-limit").rows
    assert row["center"] == pytest.approx(0.5, abs=0.05)
    assert row["plus"] == pytest.approx(row["minus"], rel=1e-9)


def test_disjoint_critical_blocks_follow_the_pair_law():
    result = run_named("disjoint-critical")
    ks = [row["ks"] for row in result.rows]
    assert ks[0] > ks[1]
    assert ks[1] < 0.05


@pytest.mark.slow
def test_critical_rate_decreases():
    result = run_named("critical-rate")
    ks = [row["ks"] for row in result.rows]
    assert ks[0] > ks[1] > ks[2]


@pytest.mark.slow
def test_line_graph_shift_runs():
    [row] = run_named("line-graph-shift").rows
    assert row["n"] == 1770
    assert row["expected_shift"] < 0
    assert row["variance_centered"] > 0
