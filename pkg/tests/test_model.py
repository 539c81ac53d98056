import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from riskdyn.errors import ValidationError
from riskdyn.model import (
    MONTHS_PER_DECADE,
    DerivedRates,
    HistoricalSeries,
    InfluenceGraph,
    ModelParams,
    RiskCatalog,
    RiskRecord,
    continuation_probability,
    derive_rates,
    external_probability,
    internal_probability,
    month_labels,
    normalize_likelihood,
    parse_group,
    rescale_params,
)

probs = st.floats(0.0, 1.0)
exponents = st.floats(1e-8, 50.0)


def test_normalize_endpoints():
    assert normalize_likelihood(1.0) == 0.0
    assert normalize_likelihood(5.0) == 1.0
    assert normalize_likelihood(3.0) == 0.5
    assert normalize_likelihood(2.5) == 0.375


@pytest.mark.parametrize("L", [0.99, 5.01, float("nan")])
def test_normalize_rejects_out_of_range(L):
    with pytest.raises(ValidationError, match="risk 7"):
        normalize_likelihood(L, risk=7)


def test_record_rejects_bad_likelihood():
    with pytest.raises(ValidationError):
        RiskRecord(1, "x", 1, 6.0, 0.1)


def test_parse_group():
    assert parse_group("economic") == 1
    assert parse_group("Technological") == 5
    assert parse_group(3) == 3
    assert parse_group("4") == 4
    for bad in (0, 6, "financial"):
        with pytest.raises(ValidationError):
            parse_group(bad)


@given(probs, exponents)
def test_power_mapping_matches_direct_formula(p, k):
    direct = 1.0 - (1.0 - p) ** k
    assert internal_probability(p, k) == pytest.approx(direct, abs=1e-12)
    assert continuation_probability(p, k) == pytest.approx(direct, abs=1e-12)


@given(probs, exponents, exponents)
def test_power_mapping_monotone_in_exponent(p, k1, k2):
    lo, hi = sorted((k1, k2))
    assert internal_probability(p, lo) <= internal_probability(p, hi) + 1e-15


def test_mapping_edge_cases():
    assert internal_probability(0.0, 3.0) == 0.0
    assert internal_probability(1.0, 3.0) == 1.0
    assert internal_probability(1.0, 0.0) == 0.0
    assert external_probability(0.7, 0.5, connected=0) == 0.0


def test_small_exponent_precision():
    # 1 - (1 - p)^k ~ -k log(1 - p) for tiny k
    k = 1e-12
    assert internal_probability(0.5, k) == pytest.approx(k * math.log(2.0), rel=1e-9)


def test_decade_to_monthly():
    d = ModelParams.decade(0.365, 0.14, 427.0)
    m = d.to_monthly()
    assert m.alpha == pytest.approx(0.365 / 120)
    assert m.gamma == pytest.approx(427 / 120)
    assert m.to_decade().gamma == pytest.approx(427.0)
    assert d.time_unit == "decade" and m.time_unit == "month"
    assert rescale_params(d, 1 / MONTHS_PER_DECADE).alpha == pytest.approx(m.alpha)


def test_params_validation():
    with pytest.raises(ValidationError):
        ModelParams.monthly(0.0, 0.1, 1.0)
    with pytest.raises(ValidationError):
        ModelParams.monthly(0.1, -0.1, 1.0)
    with pytest.raises(ValidationError):
        ModelParams.from_unit(0.1, 0.1, 1.0, "year")
    ModelParams.monthly(0.1, 0.0, 1.0)


def test_graph_validation():
    a = np.zeros((3, 3), int)
    a[0, 1] = 1
    with pytest.raises(ValidationError, match="symmetric"):
        InfluenceGraph(a)
    with pytest.raises(ValidationError, match="self-loop"):
        InfluenceGraph(np.eye(3, dtype=int))
    with pytest.raises(ValidationError):
        InfluenceGraph.from_edges(3, [(0, 1), (1, 0)])
    g = InfluenceGraph.from_edges(4, [(0, 1, 2), (2, 3)])
    assert g.n_edges == 2
    assert g.edges() == [(0, 1, 2), (2, 3, 1)]
    assert g.degrees().tolist() == [1, 1, 1, 1]


def test_derived_rates_by_hand():
    cat = RiskCatalog.from_likelihoods([3.0, 5.0, 1.0])
    g = InfluenceGraph.from_edges(3, [(0, 1), (1, 2)])
    r = derive_rates(cat, g, ModelParams.monthly(0.5, 2.0, 3.0))
    p = np.array([0.5, 1.0, 0.0])
    assert np.allclose(r.p_int, 1 - (1 - p) ** 0.5)
    assert np.allclose(r.p_con, 1 - (1 - p) ** 3.0)
    # influence depends on the target only
    assert r.p_ext[0, 1] == pytest.approx(1.0)
    assert r.p_ext[1, 0] == pytest.approx(0.75)
    assert r.p_ext[1, 2] == 0.0 and r.p_ext[0, 2] == 0.0


def test_activation_probability_brute_force():
    rng = np.random.default_rng(4)
    n = 6
    p_ext = rng.uniform(0, 0.5, (n, n))
    np.fill_diagonal(p_ext, 0)
    r = DerivedRates(rng.uniform(0, 0.3, n), rng.uniform(0, 1, n), p_ext)
    prev = np.array([1, 0, 1, 1, 0, 0])
    act = r.activation_probabilities(prev)
    for i in range(n):
        stay = 1 - r.p_int[i]
        for j in range(n):
            if prev[j] and j != i:
                stay *= 1 - p_ext[j, i]
        if not prev[i]:
            assert act[i] == pytest.approx(1 - stay, abs=1e-14)
        a, c = r.transition_probabilities(prev, i)
        assert a == pytest.approx(1 - stay, abs=1e-14)
        assert c == r.p_con[i]


@settings(max_examples=50)
@given(st.lists(st.sampled_from([1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0]), min_size=2, max_size=8),
       st.floats(1e-4, 1.0), st.floats(0.0, 1.0), st.floats(1e-3, 10.0))
def test_rates_are_probabilities(L, a, b, g):
    cat = RiskCatalog.from_likelihoods(L)
    graph = InfluenceGraph.complete(len(L))
    r = derive_rates(cat, graph, ModelParams.monthly(a, b, g))
    for arr in (r.p_int, r.p_con, r.p_ext):
        assert np.all((arr >= 0) & (arr <= 1))
    assert np.all(np.diag(r.p_ext) == 0)


def test_rates_are_read_only():
    r = DerivedRates([0.1], [0.5], [[0.0]])
    with pytest.raises(ValueError):
        r.p_int[0] = 0.2


def test_month_labels_roll_over_year():
    assert month_labels("1999-11", 4) == ("1999-11", "1999-12", "2000-01", "2000-02")


def test_history_rejects_gap_month():
    with pytest.raises(ValidationError, match="2000-03"):
        HistoricalSeries(("2000-01", "2000-03"), np.zeros((2, 2), int))


def test_history_rejects_non_binary():
    with pytest.raises(ValidationError):
        HistoricalSeries.from_states([[0, 2]])


def test_unit_exponent_gives_vulnerability():
    # alpha = 1 makes the internal probability equal to the expert vulnerability
    assert internal_probability(0.5, 1.0) == pytest.approx(0.5, abs=1e-15)


def test_reference_alpha_per_month():
    assert ModelParams.decade(0.365, 0.14, 427.0).to_monthly().alpha == pytest.approx(0.0030417, abs=5e-8)


def test_zero_beta_disconnects():
    cat = RiskCatalog.from_likelihoods([3.0, 4.0, 2.0])
    r = derive_rates(cat, InfluenceGraph.complete(3), ModelParams.monthly(0.1, 0.0, 1.0))
    assert np.all(r.p_ext == 0.0)


def test_continuation_ignores_neighbours():
    cat = RiskCatalog.from_likelihoods([3.0, 4.0, 2.0])
    r = derive_rates(cat, InfluenceGraph.complete(3), ModelParams.monthly(0.1, 2.0, 1.0))
    for prev in ([1, 0, 0], [1, 1, 1]):
        assert r.transition_probabilities(prev, 0)[1] == r.p_con[0]
