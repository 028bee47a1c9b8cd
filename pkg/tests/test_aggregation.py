import numpy as np
import pytest

from ecc_bench import scenario
from ecc_bench.aggregation import calibrate_epsilon, derive_composites
from ecc_bench.curves import EfficiencyCurve, VarianceCurve, argmax_utilization, combine_variance
from ecc_bench.errors import InvalidGraphError, NotCompositeError
from ecc_bench.graph import ComponentNode, Kind, StateGraph

from oracles import flattened_curve, random_three_level_dag


def leaf(name, samples, var=0.01):
    curve = EfficiencyCurve(samples)
    return ComponentNode(name, Kind.MEASURABLE, curve, VarianceCurve.constant(var, curve.resolution))


def test_single_child_composite_equals_child():
    child = leaf("c", np.linspace(0.1, 0.9, 101))
    g = StateGraph.build("s", [child, ComponentNode("p", Kind.COMPOSITE)], [("p", "c", 1.0)])
    ann = derive_composites(g)
    assert ann.curve("p") == child.curve
    assert ann.variance("p") == child.variance


def test_measurable_nodes_pass_through_unchanged(default_scenario):
    ann = derive_composites(default_scenario.graph)
    for nid, node in default_scenario.graph.nodes.items():
        if node.is_measurable:
            assert ann.curve(nid) is node.curve
            assert ann.variance(nid) is node.variance
    assert ann.derived == {"av", "edge_server", "cloud"}


def test_av_composite_peaks_at_81(default_scenario):
    ann = derive_composites(default_scenario.graph)
    assert abs(argmax_utilization(ann.curve("av")) - 0.81) <= 0.01 + 1e-12


def test_three_level_matches_flattening_oracle():
    rng = np.random.default_rng(3)
    leaves = [leaf(f"s{i}", rng.uniform(0.1, 0.9, 101)) for i in range(4)]
    nodes = leaves + [ComponentNode("edge", Kind.COMPOSITE, epsilon=0.01),
                      ComponentNode("cloud", Kind.COMPOSITE, epsilon=-0.02)]
    edges = [("edge", "s0", 0.25), ("edge", "s1", 0.25), ("edge", "s2", 0.5),
             ("cloud", "edge", 0.7), ("cloud", "s3", 0.3)]
    g = StateGraph.build("s", nodes, edges)
    ann = derive_composites(g)
    assert ann.clamped["cloud"] == (0, 0)
    np.testing.assert_allclose(ann.curve("cloud").samples, flattened_curve(g, "cloud"), rtol=0, atol=1e-12)


def test_order_independent_variance_uses_covariances():
    a, b = leaf("a", np.full(11, 0.5), 0.04), leaf("b", np.full(11, 0.5), 0.09)
    g = StateGraph.build("s", [a, b, ComponentNode("p", Kind.COMPOSITE)],
                         [("p", "a", 0.6), ("p", "b", 0.4)], [("b", "a", 0.01)])
    np.testing.assert_allclose(derive_composites(g).variance("p").samples, 0.0336, rtol=1e-12)


def test_derivation_independent_of_topological_order():
    # the same graph built from shuffled node and edge lists derives identically
    rng = np.random.default_rng(8)
    g = random_three_level_dag(rng, eps_scale=0.01)
    nodes = list(g.nodes.values())
    edges = list(g.edges)
    rng.shuffle(nodes)
    rng.shuffle(edges)
    g2 = StateGraph.build("s", nodes, edges)
    a1, a2 = derive_composites(g), derive_composites(g2)
    for nid in g.nodes:
        assert a1.curve(nid) == a2.curve(nid)
        assert a1.variance(nid) == a2.variance(nid)


def test_invalid_graph_rejected():
    g = StateGraph.build("s", [ComponentNode("p", Kind.COMPOSITE), leaf("a", [0.1, 0.2])], [("p", "a", 0.5)])
    with pytest.raises(InvalidGraphError):
        derive_composites(g)


def _calibration_graph():
    rng = np.random.default_rng(21)
    kids = [leaf(f"k{i}", rng.uniform(0.2, 0.7, 101)) for i in range(3)]
    g = StateGraph.build("s", kids + [ComponentNode("p", Kind.COMPOSITE)],
                         [("p", "k0", 0.2), ("p", "k1", 0.3), ("p", "k2", 0.5)])
    return g, derive_composites(g).curve("p").samples


def test_calibrate_epsilon_perfect_model():
    g, derived = _calibration_graph()
    assert calibrate_epsilon(g, "p", EfficiencyCurve(derived)) == pytest.approx(0.0, abs=1e-15)


def test_calibrate_epsilon_constant_offset():
    g, derived = _calibration_graph()
    assert calibrate_epsilon(g, "p", EfficiencyCurve(derived + 0.05)) == pytest.approx(0.05, abs=1e-12)


def test_calibrate_epsilon_noisy_offset():
    g, derived = _calibration_graph()
    noise = np.random.default_rng(99).normal(0.0, 0.01, derived.size)
    eps = calibrate_epsilon(g, "p", EfficiencyCurve(np.clip(derived + 0.03 + noise, 0, 1)))
    assert abs(eps - 0.03) <= 0.005


def test_calibrate_epsilon_requires_composite():
    g, derived = _calibration_graph()
    with pytest.raises(NotCompositeError):
        calibrate_epsilon(g, "k0", EfficiencyCurve(derived))


def test_variance_nonnegative_when_adding_independent_child():
    rng = np.random.default_rng(4)
    for _ in range(100):
        n = int(rng.integers(1, 6))
        w = rng.uniform(0.05, 1.0, n + 1)
        w /= w.sum()
        w[-1] = 1.0 - w[:-1].sum()
        kids = [(wi, VarianceCurve(rng.uniform(0, 0.05, 11))) for wi in w]
        out, clamped = combine_variance(kids)
        assert clamped == 0 and np.all(out.samples >= 0.0)


def test_scenario_composites_never_clamp(default_scenario):
    ann = derive_composites(default_scenario.graph)
    assert all(c == (0, 0) for c in ann.clamped.values())
    assert scenario.AV_PEAK == 0.81
