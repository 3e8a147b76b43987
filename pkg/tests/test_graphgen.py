from __future__ import annotations

from collections import Counter

import numpy as np
import pytest
from conftest import brute_force_regular
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from rrglab.errors import (
    EdgeNotPresent,
    InfeasibleDegree,
    InvalidSwitching,
    OddDegreeSum,
    RetryBudgetExceeded,
    TooLarge,
    ValidationFailure,
)
from rrglab.graphgen import (
    RegularGraph,
    Switching,
    apply_switching,
    circulant_graph,
    complete_graph,
    cycle_graph,
    enumerate_regular_graphs,
    graph_from_text,
    graph_to_text,
    list_switchable_pairs,
    read_graph,
    sample_by_switching,
    sample_configuration_model,
    sample_regular,
    switching_walk,
    validate_regular,
    write_graph,
)

# Number of labeled simple 3-regular graphs on 6 vertices, frozen from the
# brute-force oracle below.
COUNT_6_3 = 70


def _chi2_uniform(keys, population) -> float:
    counts = Counter(keys)
    assert set(counts) <= set(population)
    observed = np.array([counts.get(k, 0) for k in population])
    return stats.chisquare(observed).pvalue


# ---------------------------------------------------------------- sampling


def test_odd_degree_sum_rejected():
    with pytest.raises(OddDegreeSum):
        sample_configuration_model(5, 3, seed=0)


def test_degree_must_be_below_n():
    with pytest.raises(InfeasibleDegree):
        sample_configuration_model(4, 4, seed=0)


def test_n4_d3_is_complete_graph():
    for seed in range(5):
        g = sample_configuration_model(4, 3, seed)
        assert g.edge_set == complete_graph(4).edge_set
        assert g.num_edges == 6


def test_retry_budget_is_enforced():
    # acceptance probability at (40, 8) is about e^-16, so two attempts fail
    with pytest.raises(RetryBudgetExceeded):
        sample_configuration_model(40, 8, seed=0, max_retries=2)


def test_sampler_is_deterministic():
    a = sample_configuration_model(200, 3, seed=42)
    b = sample_configuration_model(200, 3, seed=42)
    c = sample_configuration_model(200, 3, seed=43)
    assert a == b
    assert a != c


@settings(max_examples=40, deadline=None)
@given(n=st.integers(4, 60), d=st.integers(1, 5), seed=st.integers(0, 2**63 - 1))
def test_sampled_graphs_are_valid(n, d, seed):
    if d >= n or (n * d) % 2:
        return
    g = sample_configuration_model(n, d, seed)
    assert validate_regular(g) == []
    assert g.num_edges == n * d // 2


@pytest.mark.parametrize("n,d,expected", [(4, 3, 1), (6, 2, 70), (6, 3, COUNT_6_3)])
def test_configuration_model_uniform(n, d, expected):
    population = [g.key() for g in enumerate_regular_graphs(n, d)]
    assert len(population) == expected
    keys = [sample_configuration_model(n, d, seed).key() for seed in range(10_000)]
    if expected == 1:
        assert set(keys) == set(population)
    else:
        assert _chi2_uniform(keys, population) > 0.001


def test_sample_regular_dispatch():
    g = sample_regular(50, 3, seed=1)
    assert g == sample_configuration_model(50, 3, 1)
    h = sample_regular(50, 8, seed=1)
    assert validate_regular(h) == []
    with pytest.raises(ValidationFailure):
        sample_regular(50, 3, seed=1, method="nope")


def test_switching_sampler_uniform_at_6_3(oracle_63):
    population = sorted(oracle_63)
    keys = [sample_by_switching(6, 3, seed, sweeps=100).key() for seed in range(3000)]
    assert _chi2_uniform(keys, population) > 0.001


def test_circulant_graph_is_regular():
    for n, d in [(10, 3), (10, 4), (1000, 8), (7, 6)]:
        assert validate_regular(circulant_graph(n, d)) == []


# ---------------------------------------------------------------- validation


def test_validate_complete_graph():
    assert validate_regular(complete_graph(4)) == []


def test_validate_missing_edge_reports_two_vertices():
    edges = [e for e in complete_graph(4).edge_list() if e != (0, 1)]
    g = RegularGraph.from_edges(4, 3, edges)
    report = validate_regular(g)
    degree_msgs = [m for m in report if "has degree 2" in m]
    assert len(degree_msgs) == 2
    assert any("vertex 0" in m for m in degree_msgs) and any("vertex 1" in m for m in degree_msgs)


def test_validate_duplicate_edge():
    edges = complete_graph(4).edge_list() + [(0, 1)]
    report = validate_regular(RegularGraph.from_edges(4, 3, edges))
    assert any("multi-edge" in m for m in report)


def test_validate_self_loop():
    report = validate_regular(RegularGraph.from_edges(3, 2, [(0, 0), (1, 2), (1, 2)]))
    assert any("self-loop" in m for m in report)


# ---------------------------------------------------------------- enumeration


def test_enumerate_k4():
    graphs = enumerate_regular_graphs(4, 3)
    assert len(graphs) == 1 and graphs[0].edge_set == complete_graph(4).edge_set


def test_enumerate_6_2_matches_brute_force_and_cycle_types():
    graphs = enumerate_regular_graphs(6, 2)
    assert {g.key() for g in graphs} == brute_force_regular(6, 2)
    # cycle covers of 6 labeled vertices: one 6-cycle (5!/2 = 60) or two triangles (C(6,3)/2 = 10)
    assert len(graphs) == 60 + 10


def test_enumerate_6_3_matches_brute_force(oracle_63):
    graphs = enumerate_regular_graphs(6, 3)
    assert {g.key() for g in graphs} == oracle_63
    assert len(graphs) == COUNT_6_3


def test_enumeration_is_lexicographic():
    keys = [g.key() for g in enumerate_regular_graphs(6, 3)]
    assert keys == sorted(keys)
    assert len(set(keys)) == len(keys)


def test_enumeration_guard():
    with pytest.raises(TooLarge):
        enumerate_regular_graphs(12, 3)
    with pytest.raises(TooLarge):
        enumerate_regular_graphs(8, 4)


# ---------------------------------------------------------------- switchings


def _replacement_sets(switches):
    return {frozenset(s.replacement()) for s in switches}


def test_c6_switchable_pairs():
    g = cycle_graph(6)
    switches = list_switchable_pairs(g, (0, 1))
    assert len(switches) == 4
    expected = {
        frozenset({(0, 2), (1, 3)}),
        frozenset({(0, 3), (1, 4)}),
        frozenset({(0, 4), (1, 3)}),
        frozenset({(0, 4), (1, 5)}),
    }
    assert _replacement_sets(switches) == expected


def test_k4_has_no_switchings():
    g = complete_graph(4)
    for e in g.edge_list():
        assert list_switchable_pairs(g, e) == []


def test_two_disjoint_edges_both_variants():
    g = RegularGraph.from_edges(4, 1, [(0, 1), (2, 3)])
    switches = list_switchable_pairs(g, (0, 1))
    assert len(switches) == 2
    assert {s.variant for s in switches} == {"parallel", "crossed"}


def test_switchable_pairs_needs_edge():
    with pytest.raises(EdgeNotPresent):
        list_switchable_pairs(cycle_graph(6), (0, 3))


def test_apply_switching_c6():
    g = cycle_graph(6)
    h = apply_switching(g, Switching((0, 1), (3, 4), "parallel"))
    assert h.edge_set == {(1, 2), (2, 3), (4, 5), (0, 5), (0, 3), (1, 4)}
    assert validate_regular(h) == []
    assert g.edge_set == cycle_graph(6).edge_set  # input untouched


def test_apply_switching_shared_vertex():
    with pytest.raises(InvalidSwitching, match="vertex"):
        apply_switching(cycle_graph(6), Switching((0, 1), (1, 2), "parallel"))


def test_apply_switching_simplicity_violation():
    # (0,1),(2,3) -> (0,3),(1,2): (1,2) already present
    with pytest.raises(InvalidSwitching):
        apply_switching(cycle_graph(6), Switching((0, 1), (2, 3), "crossed"))


def test_apply_switching_missing_edge():
    with pytest.raises(InvalidSwitching):
        apply_switching(cycle_graph(6), Switching((0, 2), (3, 4), "parallel"))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32), n=st.sampled_from([8, 10, 20]), d=st.sampled_from([2, 3, 4]))
def test_switch_then_inverse_restores_graph(seed, n, d):
    g = sample_configuration_model(n, d, seed)
    for e in g.edge_list()[:3]:
        for s in list_switchable_pairs(g, e):
            h = apply_switching(g, s)
            assert validate_regular(h) == []
            assert apply_switching(h, s.inverse()).edge_set == g.edge_set


# ---------------------------------------------------------------- walk


def test_walk_zero_steps_identity():
    g = sample_configuration_model(30, 3, 1)
    assert switching_walk(g, 0, seed=5).edge_set == g.edge_set


def test_walk_keeps_regularity():
    g = switching_walk(cycle_graph(6), 10_000, seed=7)
    assert validate_regular(g) == []
    assert g.d == 2


def test_walk_deterministic():
    g = sample_configuration_model(50, 3, 2)
    assert switching_walk(g, 5000, 9) == switching_walk(g, 5000, 9)
    assert switching_walk(g, 5000, 9).edge_set != g.edge_set


def test_walk_uniform_on_6_3(oracle_63):
    start = enumerate_regular_graphs(6, 3)[0]
    keys = [switching_walk(start, 100_000, seed).key() for seed in range(1000)]
    assert _chi2_uniform(keys, sorted(oracle_63)) > 0.001


# ---------------------------------------------------------------- serialization


def test_text_round_trip(tmp_path):
    g = sample_configuration_model(40, 3, 11)
    assert graph_from_text(graph_to_text(g)) == g
    path = write_graph(g, tmp_path / "g.txt")
    assert read_graph(path) == g


def test_text_rejects_missing_header():
    with pytest.raises(ValidationFailure):
        graph_from_text("0 1\n")


def test_neighbors_table():
    g = cycle_graph(6)
    nb = g.neighbors
    assert nb.shape == (6, 2)
    assert sorted(nb[0].tolist()) == [1, 5]
