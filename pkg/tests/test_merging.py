import itertools
from dataclasses import replace

import numpy as np
import pytest

from ecc_bench.analysis import gap_report
from ecc_bench.curves import EfficiencyCurve, VarianceCurve
from ecc_bench.errors import EmptyInputError
from ecc_bench.graph import ComponentNode, Kind, StateGraph, validate
from ecc_bench.merging import merge, renormalize_weights

from oracles import random_three_level_dag


def leaf(name, value, var=0.01, u=0.5):
    return ComponentNode(name, Kind.MEASURABLE, EfficiencyCurve.constant(value, 10),
                         VarianceCurve.constant(var, 10), current_utilization=u)


def comp(name, eps=0.0, u=0.5):
    return ComponentNode(name, Kind.COMPOSITE, epsilon=eps, current_utilization=u)


def state(sid, children, eps=0.0):
    nodes = [comp("P", eps)] + [leaf(n, v) for n, (_, v) in children.items()]
    edges = [("P", n, w) for n, (w, _) in children.items()]
    return StateGraph.build(sid, nodes, edges)


def assert_same_values(merged, graph):
    assert set(merged.nodes) == set(graph.nodes)
    assert {e.key: e.weight for e in merged.graph.edges} == pytest.approx(
        {e.key: e.weight for e in graph.edges}, abs=1e-12)
    for nid, node in graph.nodes.items():
        if node.is_measurable:
            np.testing.assert_allclose(merged.curve(nid).samples, node.curve.samples, atol=1e-12, rtol=0)
            np.testing.assert_allclose(merged.variance(nid).samples, node.variance.samples, atol=1e-12, rtol=0)
        assert merged.nodes[nid].epsilon == pytest.approx(node.epsilon, abs=1e-12)


def test_singleton_merge_reproduces_input():
    g = state("s0", {"a": (0.3, 0.4), "b": (0.7, 0.6)}, eps=0.02)
    m = merge([g])
    assert m.size == 1
    assert_same_values(m, g)


def test_merge_rejects_empty_input():
    with pytest.raises(EmptyInputError):
        merge([])


def test_duplicates_are_idempotent():
    g = random_three_level_dag(np.random.default_rng(12), eps_scale=0.01)
    one = merge([g])
    many = merge([g.with_nodes(g.nodes.values()) for _ in range(5)])
    assert_same_values(many, g)
    for nid in g.nodes:
        np.testing.assert_allclose(many.curve(nid).samples, one.curve(nid).samples, atol=1e-12, rtol=0)


def test_absent_as_zero_weight_in_one_of_four_states():
    with_edge = state("s0", {"a": (0.8, 0.5), "b": (0.2, 0.5)})
    without = [state(f"s{i}", {"b": (1.0, 0.5)}) for i in (1, 2, 3)]
    m = merge([with_edge] + without)
    assert m.raw_weights[("P", "a")] == pytest.approx(0.2, abs=1e-15)
    assert m.raw_weights[("P", "b")] == pytest.approx((0.2 + 3.0) / 4, abs=1e-15)


def test_three_state_hand_expansion():
    s0 = state("s0", {"a": (0.5, 0.2), "b": (0.5, 0.4)}, eps=0.03)
    s1 = state("s1", {"a": (0.25, 0.6), "c": (0.75, 0.8)})
    s2 = state("s2", {"b": (0.1, 0.3), "c": (0.9, 0.5)}, eps=0.06)
    m = merge([s0, s1, s2])
    raw = {("P", "a"): (0.5 + 0.25) / 3, ("P", "b"): (0.5 + 0.1) / 3, ("P", "c"): (0.75 + 0.9) / 3}
    assert m.raw_weights == pytest.approx(raw, abs=1e-15)
    total = sum(raw.values())
    for k, w in raw.items():
        assert m.weight(*k) == pytest.approx(w / total, abs=1e-15)
    np.testing.assert_allclose(m.curve("a").samples, (0.2 + 0.6) / 3, atol=1e-15)
    np.testing.assert_allclose(m.curve("c").samples, (0.8 + 0.5) / 3, atol=1e-15)
    assert m.nodes["P"].epsilon == pytest.approx(0.03, abs=1e-15)


def test_partial_presence_renormalizes_to_unit_sum():
    s0 = state("s0", {"a": (0.4, 0.5), "b": (0.6, 0.5)})
    s1 = state("s1", {"a": (0.4, 0.5), "x": (0.6, 0.5)})
    raw = merge([s0, s1], renormalize=False)
    # edges to a, b, x: 0.4, 0.3, 0.3 raw
    assert raw.raw_weights[("P", "a")] == pytest.approx(0.4)
    m = renormalize_weights(raw)
    assert sum(e.weight for e in m.graph.edges) == pytest.approx(1.0, abs=1e-12)
    assert validate(m.graph) == []


def test_equal_partial_weights_renormalize_to_half():
    s = [state("s0", {"a": (1.0, 0.5)}), state("s1", {"b": (1.0, 0.5)})]
    s += [StateGraph.build(f"s{i}", [leaf("z", 0.5)]) for i in (2, 3, 4, 5, 6, 7, 8, 9)]
    m = merge(s)
    assert m.raw_weights[("P", "a")] == pytest.approx(0.1)
    assert m.weight("P", "a") == m.weight("P", "b") == pytest.approx(0.5, abs=1e-15)


def test_weights_summing_to_one_are_a_fixed_point():
    g = state("s0", {"a": (0.3, 0.5), "b": (0.7, 0.5)})
    m = merge([g])
    again = renormalize_weights(m)
    assert [e.weight for e in again.graph.edges] == [e.weight for e in m.graph.edges]


def test_zero_sum_composite_is_flagged_and_excluded():
    g = StateGraph.build("s0", [comp("P"), leaf("a", 0.5)], [("P", "a", 1.0)])
    m = merge([g], renormalize=False)
    zeroed = replace(m, raw_weights={("P", "a"): 0.0})
    out = renormalize_weights(zeroed)
    assert out.flagged == {"P"}
    report = gap_report(out)
    assert "P" in report.excluded and "P" not in report.records
    assert "a" in report.records


@pytest.mark.parametrize("seed", range(3))
def test_permutation_invariance(seed):
    states = [StateGraph.build(f"s{i}", list(g.nodes.values()), list(g.edges)) for i, g in enumerate(
        random_three_level_dag(np.random.default_rng(seed * 10 + k), eps_scale=0.01) for k in range(3))]
    ref = merge(states)
    for perm in itertools.permutations(states):
        m = merge(list(perm))
        assert m.graph == ref.graph
        for nid in ref.annotated.curves:
            assert m.curve(nid) == ref.curve(nid)


def test_union_of_nodes_and_edges():
    s0 = state("s0", {"a": (0.5, 0.2), "b": (0.5, 0.4)})
    s1 = state("s1", {"c": (1.0, 0.6)})
    m = merge([s0, s1])
    assert set(m.nodes) == {"P", "a", "b", "c"}
    assert {e.key for e in m.graph.edges} == {("P", "a"), ("P", "b"), ("P", "c")}


def test_weight_bounds_never_exceed_state_maximum():
    rng = np.random.default_rng(7)
    states = []
    for i in range(6):
        kids = rng.choice(["a", "b", "c", "d"], size=int(rng.integers(1, 5)), replace=False)
        w = rng.uniform(0.1, 1, len(kids))
        w /= w.sum()
        w[-1] = 1 - w[:-1].sum()
        states.append(state(f"s{i}", {k: (wi, 0.5) for k, wi in zip(kids, w)}))
    m = merge(states)
    for key, w in m.raw_weights.items():
        per_state = [e.weight for g in states for e in g.edges if e.key == key]
        assert 0.0 <= w <= max(per_state)


def test_current_utilization_is_mean_over_present_states():
    s0 = StateGraph.build("s0", [leaf("a", 0.5, u=0.2)])
    s1 = StateGraph.build("s1", [leaf("a", 0.5, u=0.4)])
    s2 = StateGraph.build("s2", [leaf("b", 0.5, u=0.9)])
    m = merge([s0, s1, s2])
    assert m.utilization("a") == pytest.approx(0.3)
    assert m.utilization("b") == pytest.approx(0.9)


def test_average_mode_uses_per_state_composites():
    s0 = state("s0", {"a": (0.5, 0.2), "b": (0.5, 0.4)})
    s1 = state("s1", {"a": (0.5, 0.6), "b": (0.5, 0.8)})
    avg = merge([s0, s1], curve_mode="average")
    red = merge([s0, s1], curve_mode="rederive")
    np.testing.assert_allclose(avg.curve("P").samples, 0.5, atol=1e-15)
    np.testing.assert_allclose(red.curve("P").samples, 0.5, atol=1e-15)
    with pytest.raises(ValueError):
        merge([s0], curve_mode="median")


def test_scenario_merge_covers_every_node(scenario_merged, default_scenario):
    assert scenario_merged.size == 168
    assert set(scenario_merged.nodes) == set(default_scenario.graph.nodes)
    assert validate(scenario_merged.graph) == []
