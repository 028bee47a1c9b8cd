"""End-to-end acceptance checks, one test per criterion.

A PASS/FAIL line per test is printed in the "acceptance criteria" section of
the pytest terminal summary (see conftest.py).
"""

import itertools
import math
import time

import numpy as np
import pytest

from ecc_bench import scenario
from ecc_bench.aggregation import derive_composites
from ecc_bench.analysis import BenchmarkThresholds, Category, categorize, gap_value
from ecc_bench.cli import main
from ecc_bench.curves import EfficiencyCurve, VarianceCurve, argmax_utilization, combine_variance
from ecc_bench.fitness import refine_until
from ecc_bench.graph import ComponentNode, Kind, StateGraph, validate
from ecc_bench.ingestion import WindowSpec, parse_traces, states_from_records
from ecc_bench.merging import merge

from oracles import (
    flattened_curve,
    monte_carlo_variance,
    random_psd_covariance,
    random_three_level_dag,
    random_weights,
)

pytestmark = pytest.mark.acceptance


def _tree(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_01_power_reduction_reproduced():
    start = time.perf_counter()
    sc = scenario.generate(scenario.load_config())
    elapsed = time.perf_counter() - start
    base, final = sc.power_at(0), sc.power_at(sc.config.iterations)
    expected = {
        "processor": (base.operating_watts("processor"), 25.0, final.operating_watts("processor"), 20.0),
        "comm": (base.operating_watts("comm"), 4.0, final.operating_watts("comm"), 3.0),
        "vehicle": (base.vehicle_watts(), 50.0, final.vehicle_watts(), 44.0),
    }
    for name, (b, b_ref, f, f_ref) in expected.items():
        assert abs(b - b_ref) <= 0.005 * b_ref, name
        assert abs(f - f_ref) <= 0.005 * f_ref, name
    s = sc.summary()
    for key, ref in (("processor", 20.0), ("comm", 25.0)):
        assert abs(s["component_reduction_pct"][key] - ref) <= 0.005 * ref
    assert abs(s["vehicle_reduction_pct"] - 12.0) <= 0.005 * 12.0
    assert elapsed < 5.0


def test_02_composite_peak_at_81(default_scenario):
    av = derive_composites(default_scenario.graph).curve("av")
    assert av.resolution == 100
    assert abs(argmax_utilization(av) - 0.81) <= 0.01 + 1e-12


def test_03_refine_loop_brings_margin_below_5pct(scenario_merged):
    result = refine_until(scenario_merged, "av", margin_pct=5.0, factor=4.0, max_iter=5)
    assert result.converged
    assert result.margins[-1] < 5.0
    assert result.iterations <= 5


def test_04_variance_matches_monte_carlo():
    rng = np.random.default_rng(20240101)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 7))
        cov = random_psd_covariance(rng, n)
        w = random_weights(rng, n)
        children = [(wi, VarianceCurve.constant(cov[i, i], 10)) for i, wi in enumerate(w)]
        out, clamped = combine_variance(children, cov)
        assert clamped == 0
        mc = monte_carlo_variance(w, cov, rng, draws=200_000)
        worst = max(worst, abs(out.samples[0] - mc) / mc)
    assert worst < 0.02
    assert time.perf_counter() - start < 60.0


def test_05_recursive_derivation_equals_flattening():
    rng = np.random.default_rng(77)
    checked = 0
    for _ in range(50):
        g = random_three_level_dag(rng, max_nodes=30, eps_scale=0.02)
        assert len(g.nodes) <= 30
        ann = derive_composites(g)
        if any(c != (0, 0) for c in ann.clamped.values()):
            continue
        for nid, node in g.nodes.items():
            if not node.is_measurable:
                np.testing.assert_allclose(ann.curve(nid).samples, flattened_curve(g, nid), rtol=0, atol=1e-12)
        checked += 1
    assert checked == 50


def test_06_gap_properties():
    rng = np.random.default_rng(6)
    for _ in range(1000):
        e1, e2 = rng.uniform(0, 1, 2)
        v1, v2 = rng.uniform(0, 0.3, 2)
        g = gap_value(e1, e2, v1, v2)
        assert 0.0 <= g <= 1.0
        assert gap_value(e1, e2, 0.0, 0.0) == abs(e1 - e2)
        raw = abs(e1 - e2) + math.sqrt(v1 + v2)
        assert (g == 1.0) == (raw >= 1.0)
        if raw < 1.0:
            assert g == raw
    assert gap_value(0.9, 0.4, 0.125, 0.125) == 1.0


def test_07_merge_properties():
    rng = np.random.default_rng(7)
    g = random_three_level_dag(rng, eps_scale=0.01)
    single = merge([g])
    dup = merge([StateGraph.build(f"d{i}", list(g.nodes.values()), list(g.edges)) for i in range(4)])
    for nid in g.nodes:
        np.testing.assert_allclose(dup.curve(nid).samples, single.curve(nid).samples, rtol=0, atol=1e-12)
        np.testing.assert_allclose(dup.variance(nid).samples, single.variance(nid).samples, rtol=0, atol=1e-12)
    for e in g.edges:
        assert abs(dup.weight(*e.key) - single.weight(*e.key)) <= 1e-12

    def leaf(n, v):
        return ComponentNode(n, Kind.MEASURABLE, EfficiencyCurve.constant(v, 10),
                             VarianceCurve.constant(0.01, 10), current_utilization=0.5)

    def state(sid, kids):
        nodes = [ComponentNode("P", Kind.COMPOSITE, current_utilization=0.5)] + [leaf(k, 0.5) for k in kids]
        return StateGraph.build(sid, nodes, [("P", k, w) for k, w in kids.items()])

    states = [state("s0", {"a": 0.6, "b": 0.4}), state("s1", {"a": 0.2, "c": 0.8}), state("s2", {"c": 1.0})]
    raw_ref = {("P", "a"): (0.6 + 0.2) / 3, ("P", "b"): 0.4 / 3, ("P", "c"): (0.8 + 1.0) / 3}
    total = sum(raw_ref.values())
    ref = merge(states)
    for k, w in raw_ref.items():
        assert abs(ref.raw_weights[k] - w) <= 1e-15
        assert abs(ref.weight(*k) - w / total) <= 1e-15
    for perm in itertools.permutations(states):
        m = merge(list(perm))
        assert m.graph == ref.graph and m.raw_weights == ref.raw_weights
        assert m.curve("P") == ref.curve("P")


def test_08_benchmark_boundaries():
    th = BenchmarkThresholds()
    eps = 1e-9
    gaps = [th.a - eps, th.a, th.b, th.b + eps]
    assert [categorize(g, th) for g in gaps] == [
        Category.WELL_TUNED, Category.PARTIALLY_OPTIMIZED, Category.PARTIALLY_OPTIMIZED, Category.MISCONFIGURED]


def test_09_simulate_and_analyze_are_deterministic(tmp_path):
    for run in ("r1", "r2"):
        assert main(["simulate", "--out-dir", str(tmp_path / run / "sim")]) == 0
        sim = tmp_path / run / "sim"
        assert main(["analyze", str(sim / "graph.json"), str(sim / "traces.csv"),
                     "--out-dir", str(tmp_path / run / "analysis")]) == 0
    assert _tree(tmp_path / "r1") == _tree(tmp_path / "r2")
    assert len(_tree(tmp_path / "r1")) > 5


def test_10_seven_days_yield_168_valid_states(default_scenario):
    records = parse_traces(default_scenario.traces_csv)
    states = states_from_records(records, WindowSpec(3600), default_scenario.graph)
    assert len(states) == 168
    assert all(validate(s) == [] for s in states)
