"""Merge state graphs observed over a set of states into one aggregate graph.

Every quantity is averaged over the full state count, with a state that
lacks the node (or edge) contributing zero. Averaged weights generally no
longer sum to one, so composites are re-derived after renormalization.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .aggregation import AnnotatedGraph, derive_composites
from .curves import EfficiencyCurve, VarianceCurve
from .errors import EmptyInputError, MismatchedGridError
from .graph import ComponentNode, CovarianceTable, Kind, StateGraph, UtilizationEdge, require_valid

CURVE_MODES = ("rederive", "average")


@dataclass(frozen=True)
class MergedGraph:
    state_ids: tuple[str, ...]
    graph: StateGraph
    raw_weights: dict[tuple[str, str], float]
    annotated: AnnotatedGraph | None = None
    flagged: frozenset[str] = frozenset()
    normalized: bool = False
    curve_mode: str = "rederive"
    # per-state-average composite curves, only populated in "average" mode
    averaged: dict = field(default_factory=dict, repr=False)

    @property
    def size(self) -> int:
        return len(self.state_ids)

    @property
    def nodes(self):
        return self.graph.nodes

    def weight(self, source: str, target: str) -> float:
        for e in self.graph.edges:
            if e.key == (source, target):
                return e.weight
        return 0.0

    def curve(self, node_id: str) -> EfficiencyCurve:
        return self._require_annotated().curve(node_id)

    def variance(self, node_id: str) -> VarianceCurve:
        return self._require_annotated().variance(node_id)

    def utilization(self, node_id: str) -> float | None:
        return self.graph.nodes[node_id].current_utilization

    def _require_annotated(self) -> AnnotatedGraph:
        if self.annotated is None:
            raise ValueError("merged graph has no derived curves; call renormalize_weights first")
        return self.annotated

    def with_graph(self, graph: StateGraph) -> "MergedGraph":
        """Swap the underlying (normalized) graph and re-derive composites."""
        return _finish(replace(self, graph=graph, averaged={}))


def _mean_arrays(arrays, count):
    total = np.zeros_like(arrays[0])
    for a in arrays:
        total = total + a
    return total / count


def merge(graphs: Sequence[StateGraph], curve_mode: str = "rederive",
          renormalize: bool = True, check: bool = True) -> MergedGraph:
    """Aggregate ``graphs`` into one graph over their union of nodes and edges.

    Edge weights, node curves, variances, epsilons and covariances are summed
    over the states that contain them and divided by the total number of
    states. Current utilization is the mean over the states where it is
    known. With ``renormalize`` (the default) the result is passed through
    :func:`renormalize_weights` and composites get derived curves.
    """
    if curve_mode not in CURVE_MODES:
        raise ValueError(f"curve_mode must be one of {CURVE_MODES}")
    graphs = sorted(graphs, key=lambda g: g.state_id)
    if not graphs:
        raise EmptyInputError("merge needs at least one state graph")
    if check:
        for g in graphs:
            require_valid(g)
    count = len(graphs)

    resolutions = {c.resolution for g in graphs for n in g.nodes.values()
                   for c in (n.curve, n.variance) if c is not None}
    if len(resolutions) > 1:
        raise MismatchedGridError(f"state graphs use differing resolutions {sorted(resolutions)}")

    weight_sums: dict[tuple[str, str], list[float]] = defaultdict(list)
    for g in graphs:
        for e in g.edges:
            weight_sums[e.key].append(e.weight)
    raw = {k: math.fsum(v) / count for k, v in sorted(weight_sums.items())}
    sources = {k[0] for k in raw}

    present: dict[str, list[ComponentNode]] = defaultdict(list)
    for g in graphs:
        for nid, node in g.nodes.items():
            present[nid].append(node)

    nodes = []
    for nid in sorted(present):
        members = present[nid]
        composite = nid in sources
        utils = [m.current_utilization for m in members if m.current_utilization is not None]
        curve = variance = None
        if not composite:
            effs = [m.curve.samples for m in members if m.curve is not None]
            vars_ = [m.variance.samples for m in members if m.variance is not None]
            if effs:
                curve = EfficiencyCurve(_mean_arrays(effs, count))
            if vars_:
                variance = VarianceCurve(_mean_arrays(vars_, count))
        nodes.append(ComponentNode(
            id=nid,
            kind=Kind.COMPOSITE if composite else Kind.MEASURABLE,
            curve=curve,
            variance=variance,
            epsilon=math.fsum(m.epsilon for m in members) / count if composite else 0.0,
            measurement_cost=math.fsum(m.measurement_cost for m in members) / len(members),
            current_utilization=math.fsum(utils) / len(utils) if utils else None,
        ))

    cov_sums: dict[tuple[str, str], list[float]] = defaultdict(list)
    for g in graphs:
        for a, b, v in g.covariances.pairs():
            cov_sums[(a, b)].append(v)
    cov = CovarianceTable({k: math.fsum(v) / count for k, v in cov_sums.items()})

    edges = tuple(UtilizationEdge(s, t, w) for (s, t), w in raw.items())
    merged_graph = StateGraph.build(f"merged[{count}]", nodes, edges, cov)

    averaged = {}
    if curve_mode == "average":
        per_state = [derive_composites(g, check=False) for g in graphs]
        for nid in sorted(sources & set(present)):
            effs = [a.curves[nid].samples for a in per_state if nid in a.curves]
            vars_ = [a.variances[nid].samples for a in per_state if nid in a.variances]
            if effs:
                averaged[nid] = (EfficiencyCurve(_mean_arrays(effs, count)),
                                 VarianceCurve(_mean_arrays(vars_, count)))

    merged = MergedGraph(
        state_ids=tuple(g.state_id for g in graphs),
        graph=merged_graph,
        raw_weights=raw,
        curve_mode=curve_mode,
        averaged=averaged,
    )
    return renormalize_weights(merged) if renormalize else merged


def renormalize_weights(merged: MergedGraph) -> MergedGraph:
    """Rescale each composite's outgoing weights to sum to one.

    Composites whose raw weights sum to zero are flagged and left without
    derived curves, along with any ancestor that depends on them. Raw weights
    stay available on ``raw_weights``.
    """
    totals: dict[str, float] = defaultdict(float)
    for (s, _), w in merged.raw_weights.items():
        totals[s] += w
    edges = []
    for e in merged.graph.edges:
        total = totals[e.source]
        w = merged.raw_weights.get(e.key, 0.0)
        edges.append(UtilizationEdge(e.source, e.target, w / total if total > 0 else 0.0))
    graph = replace(merged.graph, edges=tuple(edges))
    flagged = frozenset(s for s, t in totals.items() if t <= 0.0)
    return _finish(replace(merged, graph=graph, flagged=flagged))


def _finish(merged: MergedGraph) -> MergedGraph:
    annotated = derive_composites(merged.graph, skip=merged.flagged, check=False)
    if merged.curve_mode == "average" and merged.averaged:
        curves = dict(annotated.curves)
        variances = dict(annotated.variances)
        for nid, (c, v) in merged.averaged.items():
            if nid not in merged.flagged:
                curves[nid], variances[nid] = c, v
        annotated = replace(annotated, curves=curves, variances=variances)
    return replace(merged, annotated=annotated, normalized=True)
