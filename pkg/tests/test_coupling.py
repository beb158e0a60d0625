import math

import numpy as np
import pytest
import scipy.sparse as sp

from mfising.core.config import settings
from mfising.core.exceptions import InfeasibleParametersError, RetryExhaustedError
from mfising.schemas.coupling import CouplingMatrix, MatrixDiagnostics
from mfising.services import coupling as builders


def test_circulant_rows_sum_to_one():
    coupling = builders.build_regular(10, 4, kind="circulant")
    np.testing.assert_allclose(coupling.row_sums(), np.ones(10))
    assert coupling.scale == 4.0
    dense = coupling.to_dense()
    assert np.array_equal(dense, dense.T)
    assert np.all(np.diag(dense) == 0)


def test_circulant_spectrum():
    diag = builders.diagnostics(builders.build_regular(10, 4, kind="circulant"))
    expected = (2 * math.cos(2 * math.pi / 10) + 2 * math.cos(4 * math.pi / 10)) / 4
    assert diag.lambda1 == pytest.approx(1.0, abs=1e-10)
    assert diag.lambda2 == pytest.approx(expected, abs=1e-10)
    assert diag.sum_dev == pytest.approx(0.0, abs=1e-12)


def test_random_regular_degrees():
    coupling = builders.build_regular(20, 3, seed=1)
    dense = coupling.to_dense()
    assert np.all((dense > 0).sum(axis=1) == 3)
    np.testing.assert_allclose(dense[dense > 0], 1 / 3)


def test_random_regular_is_seeded():
    first = builders.build_regular(16, 3, seed=5)
    second = builders.build_regular(16, 3, seed=5)
    assert np.array_equal(first.to_dense(), second.to_dense())


def test_random_regular_needs_even_stub_count():
    with pytest.raises(InfeasibleParametersError, match="even"):
        builders.build_regular(7, 3, seed=1)


def test_complete_kind_needs_full_degree():
    with pytest.raises(InfeasibleParametersError, match="d = n - 1"):
        builders.build_regular(6, 3, kind="complete")


def test_degree_below_n():
    with pytest.raises(InfeasibleParametersError, match="d < n"):
        builders.build_regular(5, 5, kind="circulant")


def test_random_regular_retry_cap(monkeypatch):
    monkeypatch.setattr(settings, "REGULAR_MAX_RETRIES", 0)
    with pytest.raises(RetryExhaustedError) as excinfo:
        builders.build_regular(12, 3, seed=2)
    assert excinfo.value.attempts == 0


def test_bipartite_regular():
    coupling = builders.build_regular(12, 3, kind="bipartite_regular", seed=4)
    dense = coupling.to_dense()
    np.testing.assert_allclose(coupling.row_sums(), np.ones(12))
    assert np.all(dense[:6, :6] == 0)
    assert np.all(dense[6:, 6:] == 0)


def test_complete_spectrum():
    diag = builders.diagnostics(builders.build_complete(5))
    assert diag.lambda1 == pytest.approx(1.0, abs=1e-12)
    assert diag.lambda2 == pytest.approx(-0.25, abs=1e-12)
    assert diag.frobenius_sq == pytest.approx(5 / 4)
    assert diag.alpha == pytest.approx(1 / 4)


def test_complete_with_denominator():
    coupling = builders.build_complete(6, denominator=6)
    np.testing.assert_allclose(coupling.row_sums(), np.full(6, 5 / 6))


@pytest.mark.parametrize("p", [0.0, -0.1, 1.5])
def test_erdos_renyi_rejects_bad_probability(p):
    with pytest.raises(InfeasibleParametersError, match="p"):
        builders.build_erdos_renyi(10, p, seed=1)


def test_erdos_renyi_scaling():
    coupling = builders.build_erdos_renyi(30, 0.4, seed=9)
    values = np.unique(coupling.to_dense())
    np.testing.assert_allclose(values, [0.0, 1 / (29 * 0.4)])
    assert coupling.scale == pytest.approx(29 * 0.4)


def test_directed_erdos_renyi_is_symmetrized():
    coupling = builders.build_erdos_renyi(30, 0.5, seed=2, directed=True)
    scale = 2 * 29 * 0.5
    values = np.unique(coupling.to_dense())
    assert set(np.round(values * scale, 12)) <= {0.0, 1.0, 2.0}


def test_balanced_sbm_scale():
    coupling = builders.build_sbm([10, 10], [[0.6, 0.2], [0.2, 0.6]], seed=3)
    assert coupling.scale == pytest.approx(20 * 0.8 / 2)


def test_balanced_sbm_spectral_ratio_is_half():
    coupling = builders.build_sbm([200, 200], [[0.75, 0.25], [0.25, 0.75]], seed=8)
    diag = builders.diagnostics(coupling)
    assert diag.well_connected_ratio == pytest.approx(0.5, abs=0.03)


def test_block_spin_spectral_ratio():
    # top eigenvalues of the unscaled matrix: half (a + b) - a and half (a - b) - a
    diag = builders.diagnostics(builders.build_block_spin(20, 1.0, 0.5))
    assert diag.well_connected_ratio == pytest.approx(4.0 / 14.0, rel=1e-8)
    assert diag.lambda1 == pytest.approx(1.0)


@pytest.mark.parametrize(
    "build",
    [
        lambda: builders.build_erdos_renyi(400, 0.5, seed=4),
        lambda: builders.build_wigner(400, seed=4),
        lambda: builders.build_wigner(400, law="uniform", seed=4),
    ],
    ids=["erdos_renyi", "wigner_exponential", "wigner_uniform"],
)
def test_dense_random_couplings_are_well_connected(build):
    diag = builders.diagnostics(build())
    assert diag.lambda1 == pytest.approx(1.0, abs=0.05)
    assert abs(diag.well_connected_ratio) < 0.15


def test_sbm_rejects_asymmetric_probabilities():
    with pytest.raises(InfeasibleParametersError, match="symmetric"):
        builders.build_sbm([5, 5], [[0.5, 0.1], [0.2, 0.5]], seed=1)


def test_graphon_scaling():
    coupling = builders.build_graphon(50, [[0.8, 0.2], [0.2, 0.8]], gamma=0.5, seed=5)
    assert coupling.scale == pytest.approx(50 * 0.5 * 50 ** -0.5)


def test_wigner_uniform_entries():
    coupling = builders.build_wigner(12, law="uniform", mu=2.0, seed=4)
    upper = coupling.unscaled()[np.triu_indices(12, k=1)]
    assert np.all((upper >= 0) & (upper <= 4.0))
    assert coupling.scale == pytest.approx(24.0)


def test_block_spin_row_sums():
    coupling = builders.build_block_spin(8, 1.0, 0.5)
    np.testing.assert_allclose(coupling.row_sums(), np.ones(8))
    dense = coupling.to_dense()
    assert dense[0, 1] == pytest.approx(1.0 / (3 + 4 * 0.5))
    assert dense[0, 5] == pytest.approx(0.5 / (3 + 4 * 0.5))


def test_block_spin_needs_even_n():
    with pytest.raises(InfeasibleParametersError, match="even"):
        builders.build_block_spin(7, 1.0, 1.0)


@pytest.mark.parametrize("m", [6, 10])
def test_line_graph_spectrum(m):
    coupling = builders.build_line_graph_complete(m)
    diag = builders.diagnostics(coupling)
    assert coupling.n == m * (m - 1) // 2
    assert diag.lambda1 * coupling.scale == pytest.approx(2 * (m - 2), abs=1e-9)
    assert diag.lambda2 * coupling.scale == pytest.approx(m - 4, abs=1e-9)
    assert diag.frobenius_sq == pytest.approx(coupling.n / (2 * (m - 2)))


def test_line_graph_needs_m_at_least_four():
    with pytest.raises(InfeasibleParametersError, match="m >= 4"):
        builders.build_line_graph_complete(3)


def test_two_complete_has_double_top_eigenvalue():
    diag = builders.diagnostics(builders.build_two_complete(8))
    assert diag.lambda1 == pytest.approx(0.75)
    assert diag.lambda2 == pytest.approx(0.75)
    assert diag.well_connected_ratio == pytest.approx(1.0)


def test_uneven_complete_rescales_by_average_degree():
    coupling = builders.build_uneven_complete(16)
    assert coupling.scale == pytest.approx(9.0)
    diag = builders.diagnostics(coupling)
    assert diag.sum_dev == pytest.approx(0.0, abs=1e-12)
    assert diag.max_dev == pytest.approx(6 / 9)


def test_uneven_complete_needs_square():
    with pytest.raises(InfeasibleParametersError, match="perfect square"):
        builders.build_uneven_complete(10)


def test_disjoint_union_is_block_diagonal(small_complete):
    union = builders.build_disjoint_union([small_complete, small_complete])
    dense = union.to_dense()
    assert union.n == 12
    assert np.all(dense[:6, 6:] == 0)
    np.testing.assert_allclose(dense[:6, :6], small_complete.to_dense())


def test_sparse_storage_above_dense_cap(monkeypatch):
    monkeypatch.setattr(settings, "DENSE_MAX_SITES", 10)
    coupling = builders.build_regular(30, 4, kind="circulant")
    assert sp.issparse(coupling.entries)
    diag = builders.diagnostics(coupling)
    expected = (math.cos(2 * math.pi / 30) + math.cos(4 * math.pi / 30)) / 2
    assert diag.lambda1 == pytest.approx(1.0, abs=1e-7)
    assert diag.lambda2 == pytest.approx(expected, abs=1e-7)


def test_coupling_rejects_asymmetric_entries():
    with pytest.raises(ValueError, match="symmetric"):
        CouplingMatrix(n=2, entries=np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_coupling_rejects_diagonal():
    with pytest.raises(ValueError, match="diagonal"):
        CouplingMatrix(n=2, entries=np.array([[1.0, 0.0], [0.0, 0.0]]))


def test_neighbors_match_dense_columns(small_complete):
    idx, weights = small_complete.neighbors(2)
    assert sorted(idx.tolist()) == [0, 1, 3, 4, 5]
    np.testing.assert_allclose(weights, 0.2)


def test_rate_terms_for_regular_graph():
    coupling = builders.build_regular(10, 4, kind="circulant")
    diag = builders.diagnostics(coupling)
    terms = builders.rate_terms(diag, 0.3, coupling.n)
    assert terms.eta == pytest.approx(diag.frobenius_sq)
    assert terms.delta == pytest.approx(0.0, abs=1e-20)
    assert terms.uniq == pytest.approx(diag.frobenius_sq)


def test_rate_terms_grow_with_irregularity():
    regular = builders.diagnostics(builders.build_regular(16, 15, kind="complete"))
    uneven = builders.diagnostics(builders.build_uneven_complete(16))
    t = 0.4
    assert builders.rate_terms(uneven, t, 16).eta > builders.rate_terms(regular, t, 16).eta


def test_rate_terms_reject_saturated_t(small_complete):
    diag = builders.diagnostics(small_complete)
    with pytest.raises(InfeasibleParametersError, match=r"\|t\| < 1"):
        builders.rate_terms(diag, 1.0, small_complete.n)


RATE_TERM_NAMES = [
    "eta", "nonuniq", "epsilon", "r", "delta", "theta11", "uniq", "critical", "partition_critical",
]


def make_diagnostics(**overrides):
    values = {
        "n": 100,
        "row_sums": np.ones(100),
        "frobenius_sq": 1.0,
        "lambda1": 1.0,
        "lambda2": 0.1,
        "alpha": 0.02,
        "sum_dev": 0.0,
        "sum_dev_sq": 0.0,
        "max_dev": 0.0,
        "well_connected_ratio": 0.1,
        "a4_stat": 0.0,
    }
    values.update(overrides)
    return MatrixDiagnostics(**values)


@pytest.mark.parametrize(
    "field,values,growing",
    [
        ("sum_dev_sq", [0.0, 0.5, 2.0, 8.0], ["eta", "nonuniq", "epsilon", "delta", "uniq"]),
        ("sum_dev", [0.0, -0.5, 2.0, -8.0], ["nonuniq", "epsilon", "delta", "uniq", "partition_critical"]),
        ("max_dev", [0.0, 0.1, 0.5, 2.0], ["r", "critical"]),
    ],
)
def test_rate_terms_are_monotone_in_row_sum_deviations(field, values, growing):
    terms = [builders.rate_terms(make_diagnostics(**{field: v}), 0.5, 100) for v in values]
    for name in RATE_TERM_NAMES:
        series = np.array([getattr(term, name) for term in terms])
        assert np.all(np.diff(series) >= 0), name
        if name in growing:
            assert np.all(np.diff(series) > 0), name
