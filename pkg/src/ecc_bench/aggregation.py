"""Derive composite efficiency and variance curves bottom-up through a DAG."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .curves import EfficiencyCurve, VarianceCurve, combine_variance, linear_combine, raw_linear_combine
from .errors import InvalidGraphError, MismatchedGridError, NotCompositeError, UnknownNodeError
from .graph import StateGraph, require_valid, topological_order


@dataclass(frozen=True)
class AnnotatedGraph:
    """A state graph plus efficiency and variance curves for every node.

    ``derived`` names the composite nodes whose curves were computed here;
    ``clamped`` counts clamped grid points per derived node as
    ``(efficiency, variance)``.
    """

    graph: StateGraph
    curves: dict[str, EfficiencyCurve]
    variances: dict[str, VarianceCurve]
    derived: frozenset[str] = frozenset()
    clamped: dict[str, tuple[int, int]] = field(default_factory=dict)

    def curve(self, node_id: str) -> EfficiencyCurve:
        try:
            return self.curves[node_id]
        except KeyError:
            raise UnknownNodeError(node_id) from None

    def variance(self, node_id: str) -> VarianceCurve:
        try:
            return self.variances[node_id]
        except KeyError:
            raise UnknownNodeError(node_id) from None


def derive_composites(graph: StateGraph, skip=(), check=True) -> AnnotatedGraph:
    """Compute curves for every composite node from its children.

    Children are processed first. A composite's efficiency is the weighted
    sum of its children's curves plus its epsilon, clamped to [0, 1]; its
    variance is the weighted quadratic form over child variances and the
    state's covariance table. Measurable nodes pass through untouched.

    Nodes in ``skip``, and any composite depending on one of them, get no
    curves. ``check=False`` bypasses structural validation (callers that have
    already validated, or that supply renormalized weights themselves).
    """
    if check:
        require_valid(graph)
    order = topological_order(graph)
    curves: dict[str, EfficiencyCurve] = {}
    variances: dict[str, VarianceCurve] = {}
    derived = set()
    clamped = {}
    skipped = set(skip)

    for nid in order:
        node = graph.nodes[nid]
        kids = graph.children(nid)
        if nid in skipped:
            continue
        if not kids:
            if node.curve is None or node.variance is None:
                raise InvalidGraphError(f"measurable {nid} lacks curves")
            curves[nid] = node.curve
            variances[nid] = node.variance
            continue
        if any(c in skipped or c not in curves for c, _ in kids):
            skipped.add(nid)
            continue
        eff = [(w, curves[c]) for c, w in kids]
        var = [(w, variances[c]) for c, w in kids]
        cov = {}
        for i, (a, _) in enumerate(kids):
            for k in range(i + 1, len(kids)):
                value = graph.covariances.get(a, kids[k][0])
                if value:
                    cov[(i, k)] = value
        try:
            curve, n_eff = linear_combine(eff, node.epsilon)
            variance, n_var = combine_variance(var, cov)
        except MismatchedGridError as exc:
            raise MismatchedGridError(f"children of {nid}: {exc}") from None
        curves[nid] = curve
        variances[nid] = variance
        derived.add(nid)
        clamped[nid] = (n_eff, n_var)

    return AnnotatedGraph(graph, curves, variances, frozenset(derived), clamped)


def calibrate_epsilon(graph: StateGraph, parent: str, observed: EfficiencyCurve) -> float:
    """Least-squares offset matching a composite's derived curve to a direct measurement.

    The offset minimizing the mean squared pointwise difference, before
    clamping, is the grid mean of ``observed - sum(weight * child)``.
    """
    if parent not in graph.nodes:
        raise UnknownNodeError(parent)
    kids = graph.children(parent)
    if not kids:
        raise NotCompositeError(f"{parent} has no children; only composites carry an epsilon")
    annotated = derive_composites(graph)
    children = [(w, annotated.curve(c)) for c, w in kids]
    if observed.resolution != children[0][1].resolution:
        raise MismatchedGridError("observed curve is on a different grid")
    base = raw_linear_combine(children)
    return float(np.mean(observed.samples - base))
