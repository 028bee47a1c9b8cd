"""Model-fitness protocol: keep, prune or refine measurements against a variance budget.

Given an acceptable variance band at a benchmark node, one of three rules
fires. Inside the band nothing changes. Below the band the model is more
precise than needed, so expensive low-variance leaves are pruning
candidates. Above it, cheap high-variance leaves are refinement candidates.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .analysis import error_margin
from .curves import VarianceCurve, argmax_utilization, evaluate
from .errors import LastChildError, MissingUtilizationError, UnknownNodeError
from .graph import CovarianceTable, StateGraph, UtilizationEdge, flattened_weights
from .merging import MergedGraph

log = logging.getLogger(__name__)

DELTA = 1e-9
VARIANCE_AT = ("current", "optimal", "mean")


class Action(str, Enum):
    NO_CHANGE = "NoChange"
    PRUNE = "Prune"
    REFINE = "Refine"


_RATIONALE = {
    1: "target variance is inside the acceptable band; keep the model as is",
    2: "target variance is below the band; prune or simplify expensive, low-variance "
       "measurements to cut measurement cost",
    3: "target variance is above the band; refine cheap, high-variance measurements "
       "to reduce model variance",
}


@dataclass(frozen=True)
class FitnessTarget:
    node: str
    variance_min: float = 0.0
    variance_max: float = float("inf")

    def __post_init__(self):
        if self.variance_min < 0 or self.variance_max < self.variance_min:
            raise ValueError("need 0 <= variance_min <= variance_max")


@dataclass(frozen=True)
class FitnessRecommendation:
    action: Action
    candidates: tuple[tuple[str, float], ...]
    rule: int
    target_variance: float
    notes: tuple[str, ...] = ()

    @property
    def rationale(self) -> str:
        return _RATIONALE[self.rule]

    def to_dict(self) -> dict:
        return {
            "action": self.action.value,
            "rule": self.rule,
            "rationale": self.rationale,
            "target_variance": self.target_variance,
            "candidates": [{"id": c, "score": s} for c, s in self.candidates],
            "notes": list(self.notes),
        }


def _utilization(merged: MergedGraph, node: str, variance_at: str):
    if variance_at == "optimal":
        return argmax_utilization(merged.curve(node))
    if variance_at == "mean":
        return None
    u = merged.utilization(node)
    if u is None:
        raise MissingUtilizationError(f"{node} has no current utilization")
    return u


def _read(curve, u):
    return float(np.mean(curve.samples)) if u is None else evaluate(curve, u)


def variance_contributions(merged: MergedGraph, node: str, variance_at: str = "current") -> dict[str, float]:
    """Squared effective weight times variance for each measurable descendant."""
    u = _utilization(merged, node, variance_at)
    weights = flattened_weights(merged.graph, node)
    weights.pop(node, None)
    return {leaf: w * w * _read(merged.variance(leaf), u) for leaf, w in sorted(weights.items())}


def assess(merged: MergedGraph, target: FitnessTarget, variance_at: str = "current") -> FitnessRecommendation:
    """Apply the three fitness rules to ``target.node``.

    ``variance_at`` picks where the target variance is read: at its current
    utilization (default), at its peak-efficiency utilization, or averaged
    over the whole curve.
    """
    if variance_at not in VARIANCE_AT:
        raise ValueError(f"variance_at must be one of {VARIANCE_AT}")
    if target.node not in merged.nodes:
        raise UnknownNodeError(target.node)
    u = _utilization(merged, target.node, variance_at)
    v = _read(merged.variance(target.node), u)

    if target.variance_min <= v <= target.variance_max:
        return FitnessRecommendation(Action.NO_CHANGE, (), 1, v)

    contrib = variance_contributions(merged, target.node, variance_at)
    costs = {c: merged.nodes[c].measurement_cost for c in contrib}
    if v < target.variance_min:
        scores = {c: costs[c] / (contrib[c] + DELTA) for c in contrib}
        action, rule = Action.PRUNE, 2
    else:
        scores = {c: contrib[c] / (costs[c] + DELTA) for c in contrib}
        action, rule = Action.REFINE, 3
    ranked = tuple(sorted(scores.items(), key=lambda kv: (-kv[1], kv[0])))
    notes = ()
    if action is Action.PRUNE and len(ranked) > 1:
        notes = ("consider simplifying low-variance siblings into one aggregate measurement "
                 "(manual step)",)
    return FitnessRecommendation(action, ranked, rule, v, notes)


def apply_prune(graph: StateGraph, node: str) -> StateGraph:
    """Remove measurable ``node`` and renormalize its siblings' weights.

    Parents keep their epsilon, which should be recalibrated afterwards.
    """
    if node not in graph.nodes:
        raise UnknownNodeError(node)
    if graph.children(node):
        raise ValueError(f"{node} is composite; only measurable nodes can be pruned")
    parents = graph.parents(node)
    for p in parents:
        if len(graph.children(p)) < 2:
            raise LastChildError(f"pruning {node} would leave {p} without children")

    edges = []
    for p in parents:
        kept = [(c, w) for c, w in graph.children(p) if c != node]
        total = sum(w for _, w in kept)
        if total <= 0:
            raise LastChildError(f"remaining children of {p} carry zero weight")
        edges.extend(UtilizationEdge(p, c, w / total) for c, w in kept)
    edges.extend(e for e in graph.edges if e.source not in parents and e.target != node)
    nodes = [n for nid, n in graph.nodes.items() if nid != node]
    cov = CovarianceTable([(a, b, v) for a, b, v in graph.covariances.pairs() if node not in (a, b)])
    if parents:
        log.info("pruned %s; epsilon of %s needs recalibration", node, ", ".join(parents))
    return StateGraph.build(graph.state_id, nodes, edges, cov)


def scale_variance(graph: StateGraph, node: str, factor: float) -> StateGraph:
    """Copy of ``graph`` with one measurable node's variance curve divided by ``factor``."""
    n = graph.nodes[node]
    refined = VarianceCurve(n.variance.samples / factor)
    return graph.with_nodes([replace(n, variance=refined)])


@dataclass
class RefineLoopResult:
    merged: MergedGraph
    margins: list[float] = field(default_factory=list)
    refined: list[str] = field(default_factory=list)
    converged: bool = False

    @property
    def iterations(self) -> int:
        return len(self.refined)


def refine_until(merged: MergedGraph, node: str, margin_pct: float = 5.0,
                 factor: float = 4.0, max_iter: int = 5) -> RefineLoopResult:
    """Follow Refine recommendations until the node's error margin drops below ``margin_pct``.

    Each iteration divides the top candidate's variance by ``factor``.
    """
    result = RefineLoopResult(merged)
    for it in range(max_iter + 1):
        margin = error_margin(result.merged, node)
        result.margins.append(margin)
        if margin < margin_pct:
            result.converged = True
            break
        if it == max_iter:
            break
        eta = evaluate(result.merged.curve(node), result.merged.utilization(node))
        budget = (margin_pct / 100.0 * eta) ** 2
        rec = assess(result.merged, FitnessTarget(node, 0.0, budget))
        if rec.action is not Action.REFINE or not rec.candidates:
            break
        top = rec.candidates[0][0]
        result.refined.append(top)
        result.merged = result.merged.with_graph(scale_variance(result.merged.graph, top, factor))
    return result
