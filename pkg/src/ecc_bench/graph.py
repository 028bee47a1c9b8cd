"""Weighted utilization DAG for a single observed system state.

Edges point from the utilizer (a composite) to the utilized component. A
node with no outgoing edges is measurable and must carry its own efficiency
and variance curves; a node with outgoing edges is composite and gets its
curves derived from its children.
"""

from __future__ import annotations

import heapq
from collections import defaultdict
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Mapping

from .curves import WEIGHT_TOL, EfficiencyCurve, VarianceCurve
from .errors import CycleError, InvalidGraphError


class Kind(str, Enum):
    MEASURABLE = "measurable"
    COMPOSITE = "composite"


@dataclass(frozen=True)
class ComponentNode:
    id: str
    kind: Kind
    curve: EfficiencyCurve | None = None
    variance: VarianceCurve | None = None
    epsilon: float = 0.0
    measurement_cost: float = 1.0
    current_utilization: float | None = None

    def __post_init__(self):
        if not isinstance(self.id, str) or not self.id:
            raise ValueError("component id must be a non-empty string")
        object.__setattr__(self, "kind", Kind(self.kind))
        if self.measurement_cost < 0:
            raise ValueError(f"{self.id}: measurement_cost must be non-negative")
        u = self.current_utilization
        if u is not None and not 0.0 <= u <= 1.0:
            raise ValueError(f"{self.id}: current_utilization {u} outside [0, 1]")

    @property
    def is_measurable(self) -> bool:
        return self.kind is Kind.MEASURABLE


@dataclass(frozen=True)
class UtilizationEdge:
    source: str
    target: str
    weight: float

    @property
    def key(self) -> tuple[str, str]:
        return (self.source, self.target)


class CovarianceTable(Mapping):
    """Symmetric covariance lookup keyed by unordered component pairs.

    Absent pairs read as 0.
    """

    def __init__(self, entries=None):
        """``entries``: mapping ``{(a, b): value}`` or iterable of ``(a, b, value)``."""
        self._data: dict[frozenset, float] = {}
        if isinstance(entries, CovarianceTable):
            self._data = dict(entries._data)
            return
        if isinstance(entries, Mapping):
            entries = ((*pair, v) for pair, v in entries.items())
        for a, b, value in entries or ():
            self._data[self._key(a, b)] = float(value)

    @staticmethod
    def _key(a, b):
        if a == b:
            raise ValueError(f"covariance pair needs two distinct components, got {a!r}")
        return frozenset((a, b))

    def get(self, a, b=None, default=0.0):
        if b is None:  # Mapping.get(key) form
            return self._data.get(frozenset(a), default)
        return self._data.get(self._key(a, b), default)

    def __getitem__(self, pair):
        return self._data[frozenset(pair)]

    def __iter__(self):
        return iter(self._data)

    def __len__(self):
        return len(self._data)

    def pairs(self):
        """Sorted ``(a, b, value)`` triples with ``a < b``."""
        return sorted((*sorted(k), v) for k, v in self._data.items())

    def __eq__(self, other):
        if isinstance(other, CovarianceTable):
            return self._data == other._data
        return NotImplemented

    def __repr__(self):
        return f"CovarianceTable({self.pairs()!r})"


@dataclass(frozen=True)
class Violation:
    code: str
    ids: tuple[str, ...]
    message: str

    def to_dict(self):
        return {"code": self.code, "ids": list(self.ids), "message": self.message}


@dataclass(frozen=True)
class StateGraph:
    state_id: str
    nodes: Mapping[str, ComponentNode]
    edges: tuple[UtilizationEdge, ...] = ()
    covariances: CovarianceTable = field(default_factory=CovarianceTable)

    @classmethod
    def build(cls, state_id, nodes: Iterable[ComponentNode],
              edges: Iterable = (), covariances=None) -> "StateGraph":
        """Construct from node and edge iterables; edges may be plain tuples."""
        node_map: dict[str, ComponentNode] = {}
        for n in nodes:
            if n.id in node_map:
                raise ValueError(f"duplicate component id {n.id!r}")
            node_map[n.id] = n
        edge_list = tuple(sorted((e if isinstance(e, UtilizationEdge) else UtilizationEdge(*e)
                                  for e in edges), key=lambda e: e.key))
        cov = covariances if isinstance(covariances, CovarianceTable) else CovarianceTable(covariances)
        return cls(str(state_id), dict(sorted(node_map.items())), edge_list, cov)

    def children(self, node_id: str) -> list[tuple[str, float]]:
        """Outgoing ``(child, weight)`` pairs sorted by child id."""
        return sorted((e.target, e.weight) for e in self.edges if e.source == node_id)

    def parents(self, node_id: str) -> list[str]:
        return sorted({e.source for e in self.edges if e.target == node_id})

    def descendants(self, node_id: str) -> set[str]:
        out = defaultdict(list)
        for e in self.edges:
            out[e.source].append(e.target)
        seen: set[str] = set()
        stack = list(out[node_id])
        while stack:
            n = stack.pop()
            if n not in seen:
                seen.add(n)
                stack.extend(out[n])
        return seen

    def with_nodes(self, nodes: Iterable[ComponentNode]) -> "StateGraph":
        updated = dict(self.nodes)
        for n in nodes:
            updated[n.id] = n
        return replace(self, nodes=dict(sorted(updated.items())))


def validate(graph: StateGraph) -> list[Violation]:
    """Every structural violation in ``graph``; an empty list means valid."""
    report: list[Violation] = []
    ids = set(graph.nodes)
    outgoing: dict[str, list[UtilizationEdge]] = defaultdict(list)
    seen_edges: set[tuple[str, str]] = set()

    for e in graph.edges:
        if e.source == e.target:
            report.append(Violation("self_loop", (e.source,), f"edge {e.source}->{e.target} is a self-loop"))
        missing = [x for x in (e.source, e.target) if x not in ids]
        if missing:
            report.append(Violation("dangling_edge", (e.source, e.target),
                                    f"edge {e.source}->{e.target} references unknown node(s) {missing}"))
        if not 0.0 <= e.weight <= 1.0:
            report.append(Violation("weight_range", (e.source, e.target),
                                    f"edge {e.source}->{e.target} weight {e.weight} outside [0, 1]"))
        if e.key in seen_edges:
            report.append(Violation("duplicate_edge", (e.source, e.target),
                                    f"edge {e.source}->{e.target} appears more than once"))
        seen_edges.add(e.key)
        outgoing[e.source].append(e)

    for src in sorted(outgoing):
        total = sum(e.weight for e in outgoing[src])
        if abs(total - 1.0) > WEIGHT_TOL:
            report.append(Violation("weight_sum", (src,),
                                    f"outgoing weights of {src} sum to {total:.12g}, expected 1"))

    resolutions = set()
    for nid, node in graph.nodes.items():
        has_out = nid in outgoing
        if node.is_measurable and has_out:
            report.append(Violation("kind_mismatch", (nid,), f"{nid} is measurable but has outgoing edges"))
        if not node.is_measurable and not has_out:
            report.append(Violation("kind_mismatch", (nid,), f"{nid} is composite but has no outgoing edges"))
        if node.is_measurable:
            if node.curve is None or node.variance is None:
                report.append(Violation("missing_curve", (nid,),
                                        f"measurable {nid} lacks an efficiency or variance curve"))
            elif node.curve.resolution != node.variance.resolution:
                report.append(Violation("grid_mismatch", (nid,),
                                        f"{nid} efficiency and variance curves differ in resolution"))
        for c in (node.curve, node.variance):
            if c is not None:
                resolutions.add(c.resolution)
    if len(resolutions) > 1:
        report.append(Violation("grid_mismatch", (),
                                f"curves use differing resolutions {sorted(resolutions)}"))

    for a, b, _ in graph.covariances.pairs():
        if a not in ids or b not in ids:
            report.append(Violation("dangling_covariance", (a, b),
                                    f"covariance ({a}, {b}) references an unknown node"))

    cycle = find_cycle(graph)
    if cycle:
        report.append(Violation("cycle", tuple(cycle), "cycle through " + " -> ".join(cycle)))
    return report


def find_cycle(graph: StateGraph) -> list[str]:
    """One directed cycle as a node list (closing node repeated), or []."""
    adj = defaultdict(list)
    for e in graph.edges:
        adj[e.source].append(e.target)
    for k in adj:
        adj[k].sort()
    WHITE, GREY, BLACK = 0, 1, 2
    color: dict[str, int] = defaultdict(int)
    for start in sorted(set(adj) | set(graph.nodes)):
        if color[start] != WHITE:
            continue
        path = [start]
        iters = [iter(adj[start])]
        color[start] = GREY
        while iters:
            nxt = next(iters[-1], None)
            if nxt is None:
                color[path.pop()] = BLACK
                iters.pop()
            elif color[nxt] == GREY:
                i = path.index(nxt)
                return path[i:] + [nxt]
            elif color[nxt] == WHITE:
                color[nxt] = GREY
                path.append(nxt)
                iters.append(iter(adj[nxt]))
    return []


def require_valid(graph: StateGraph) -> None:
    violations = validate(graph)
    if violations:
        cls = CycleError if any(v.code == "cycle" for v in violations) else InvalidGraphError
        raise cls(f"graph {graph.state_id!r} is invalid: "
                  + "; ".join(v.message for v in violations), violations)


def classify(graph: StateGraph) -> tuple[set[str], set[str]]:
    """Split node ids into (measurable, composite) by outgoing-edge topology."""
    require_valid(graph)
    sources = {e.source for e in graph.edges}
    composite = {n for n in graph.nodes if n in sources}
    return set(graph.nodes) - composite, composite


def topological_order(graph: StateGraph) -> list[str]:
    """Node ids with every child ahead of its parents, ties broken by id."""
    pending = {n: 0 for n in graph.nodes}
    for e in graph.edges:
        pending.setdefault(e.source, 0)
        pending.setdefault(e.target, 0)
    parents = defaultdict(list)
    for e in graph.edges:
        pending[e.source] += 1
        parents[e.target].append(e.source)
    heap = [n for n, k in pending.items() if k == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        n = heapq.heappop(heap)
        order.append(n)
        for p in parents[n]:
            pending[p] -= 1
            if pending[p] == 0:
                heapq.heappush(heap, p)
    if len(order) != len(pending):
        cycle = find_cycle(graph)
        raise CycleError("graph contains a cycle: " + " -> ".join(cycle),
                         [Violation("cycle", tuple(cycle), "cycle")])
    return order


def flattened_weights(graph: StateGraph, node_id: str) -> dict[str, float]:
    """Effective weight of every measurable descendant in ``node_id``.

    Sums weight products over all directed paths. A measurable node maps to
    itself with weight 1.
    """
    memo: dict[str, dict[str, float]] = {}

    def expand(n):
        if n in memo:
            return memo[n]
        kids = graph.children(n)
        if not kids:
            memo[n] = {n: 1.0}
            return memo[n]
        acc: dict[str, float] = defaultdict(float)
        for child, w in kids:
            for leaf, lw in expand(child).items():
                acc[leaf] += w * lw
        memo[n] = dict(acc)
        return memo[n]

    return expand(node_id)
