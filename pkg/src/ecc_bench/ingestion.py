"""Graph JSON files, utilization trace CSVs, and windowing traces into states."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

import jsonschema
import numpy as np

from . import kernels
from .curves import EfficiencyCurve, VarianceCurve
from .errors import ParseError, SchemaError, UnknownComponentError, ValidationError
from .graph import ComponentNode, Kind, StateGraph, UtilizationEdge, topological_order, validate

SCHEMA_VERSION = 1

_unit = {"type": "number", "minimum": 0, "maximum": 1}
_samples = {"type": ["array", "null"], "minItems": 2, "items": _unit}
_variances = {"type": ["array", "null"], "minItems": 2, "items": {"type": "number", "minimum": 0}}

GRAPH_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["version", "state_id", "nodes"],
    "properties": {
        "version": {"const": SCHEMA_VERSION},
        "state_id": {"type": "string"},
        "nodes": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "kind"],
                "properties": {
                    "id": {"type": "string", "minLength": 1},
                    "kind": {"enum": ["measurable", "composite"]},
                    "curve": _samples,
                    "variance": _variances,
                    "epsilon": {"type": "number"},
                    "measurement_cost": {"type": "number", "minimum": 0},
                    "current_utilization": {"oneOf": [_unit, {"type": "null"}]},
                    "derived": {"type": "boolean"},
                },
            },
        },
        "edges": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["from", "to", "weight"],
                "properties": {
                    "from": {"type": "string", "minLength": 1},
                    "to": {"type": "string", "minLength": 1},
                    "weight": _unit,
                },
            },
        },
        "covariances": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["a", "b", "value"],
                "properties": {
                    "a": {"type": "string"},
                    "b": {"type": "string"},
                    "value": {"type": "number"},
                },
            },
        },
    },
}

_validator = jsonschema.Draft7Validator(GRAPH_SCHEMA)


def _field_path(path) -> str:
    out = ""
    for p in path:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out or "<root>"


def graph_from_dict(data) -> StateGraph:
    errors = sorted(_validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        msgs = []
        for err in errors:
            where = _field_path(err.absolute_path)
            path = list(err.absolute_path)
            if len(path) >= 2 and path[0] == "edges" and isinstance(data.get("edges"), list):
                edge = data["edges"][path[1]]
                if isinstance(edge, dict):
                    where += f" (edge {edge.get('from')}->{edge.get('to')})"
            elif len(path) >= 2 and path[0] == "nodes" and isinstance(data.get("nodes"), list):
                node = data["nodes"][path[1]]
                if isinstance(node, dict):
                    where += f" (node {node.get('id')})"
            msgs.append(f"{where}: {err.message}")
        raise SchemaError("; ".join(msgs))

    nodes = []
    seen = set()
    for i, n in enumerate(data["nodes"]):
        if n["id"] in seen:
            raise SchemaError(f"nodes[{i}].id: duplicate component id {n['id']!r}")
        seen.add(n["id"])
        kind = Kind(n["kind"])
        curve = variance = None
        # composite curves are always re-derived, never taken from the file
        if kind is Kind.MEASURABLE:
            if n.get("curve") is not None:
                curve = EfficiencyCurve(n["curve"])
            if n.get("variance") is not None:
                variance = VarianceCurve(n["variance"])
        nodes.append(ComponentNode(
            id=n["id"], kind=kind, curve=curve, variance=variance,
            epsilon=float(n.get("epsilon", 0.0)),
            measurement_cost=float(n.get("measurement_cost", 1.0)),
            current_utilization=n.get("current_utilization"),
        ))
    edges = [UtilizationEdge(e["from"], e["to"], float(e["weight"])) for e in data.get("edges", [])]
    cov = [(c["a"], c["b"], c["value"]) for c in data.get("covariances", [])]
    try:
        return StateGraph.build(data["state_id"], nodes, edges, cov)
    except ValueError as exc:
        raise SchemaError(str(exc)) from None


def graph_to_dict(graph: StateGraph, annotated=None) -> dict:
    """Serializable form; composites carry derived curves when ``annotated`` is given."""
    nodes = []
    for nid, n in graph.nodes.items():
        entry = {
            "id": nid,
            "kind": n.kind.value,
            "curve": n.curve.tolist() if n.curve is not None else None,
            "variance": n.variance.tolist() if n.variance is not None else None,
            "epsilon": n.epsilon,
            "measurement_cost": n.measurement_cost,
            "current_utilization": n.current_utilization,
        }
        if annotated is not None and nid in annotated.derived:
            entry["curve"] = annotated.curves[nid].tolist()
            entry["variance"] = annotated.variances[nid].tolist()
            entry["derived"] = True
        nodes.append(entry)
    return {
        "version": SCHEMA_VERSION,
        "state_id": graph.state_id,
        "nodes": nodes,
        "edges": [{"from": e.source, "to": e.target, "weight": e.weight}
                  for e in sorted(graph.edges, key=lambda e: e.key)],
        "covariances": [{"a": a, "b": b, "value": v} for a, b, v in graph.covariances.pairs()],
    }


def merged_to_dict(merged) -> dict:
    data = graph_to_dict(merged.graph, merged.annotated)
    data["state_ids"] = list(merged.state_ids)
    data["raw_weights"] = [{"from": s, "to": t, "weight": w} for (s, t), w in sorted(merged.raw_weights.items())]
    data["flagged"] = sorted(merged.flagged)
    return data


def dumps(data) -> str:
    return json.dumps(data, indent=2) + "\n"


def parse_graph(text: str, validate_graph: bool = True) -> StateGraph:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    graph = graph_from_dict(data)
    if validate_graph:
        violations = validate(graph)
        if violations:
            raise ValidationError("; ".join(v.message for v in violations), violations)
    return graph


def load_graph(path, validate_graph: bool = True) -> StateGraph:
    """Read a graph JSON file.

    Raises ParseError for malformed JSON, SchemaError for schema/range
    violations and ValidationError for structural graph violations.
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror}") from None
    try:
        return parse_graph(text, validate_graph)
    except (ParseError, SchemaError, ValidationError) as exc:
        exc.args = (f"{path}: {exc.args[0]}",) + exc.args[1:]
        raise


def save_graph(graph: StateGraph, path, annotated=None) -> None:
    Path(path).write_text(dumps(graph_to_dict(graph, annotated)), encoding="utf-8")


# -- traces -------------------------------------------------------------

class Aggregation(str, Enum):
    MEAN = "mean"
    P95 = "p95"
    MAX = "max"


_MODE = {Aggregation.MEAN: kernels.MEAN, Aggregation.MAX: kernels.MAX, Aggregation.P95: kernels.P95}


@dataclass(frozen=True)
class WindowSpec:
    window_seconds: int = 3600
    aggregation: Aggregation = Aggregation.MEAN

    def __post_init__(self):
        if int(self.window_seconds) <= 0:
            raise ValueError("window_seconds must be positive")
        object.__setattr__(self, "aggregation", Aggregation(self.aggregation))


@dataclass(frozen=True)
class TraceRecord:
    timestamp: int
    component: str
    utilization: float
    power_watts: float | None = None


TRACE_HEADER = ("timestamp", "component", "utilization")


def parse_traces(text: str) -> list[TraceRecord]:
    """Parse trace CSV text, returning records sorted by (timestamp, component)."""
    if not text.strip():
        return []
    reader = csv.reader(io.StringIO(text, newline=""))
    header = [h.strip() for h in next(reader)]
    if tuple(header[:3]) != TRACE_HEADER or header[3:] not in ([], ["power_watts"]):
        raise ParseError(f"row 1: expected header timestamp,component,utilization[,power_watts], got {','.join(header)}")
    has_power = len(header) == 4
    records = []
    for rowno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"row {rowno}: expected {len(header)} fields, got {len(row)}")
        try:
            ts = int(row[0])
            comp = row[1].strip()
            util = float(row[2])
            power = float(row[3]) if has_power and row[3].strip() else None
        except ValueError as exc:
            raise ParseError(f"row {rowno}: {exc}") from None
        if not comp:
            raise ParseError(f"row {rowno}: empty component id")
        if not (0.0 <= util <= 1.0) or math.isnan(util):
            raise ParseError(f"row {rowno}: utilization {util} outside [0, 1]")
        if power is not None and not power >= 0.0:
            raise ParseError(f"row {rowno}: power_watts must be non-negative")
        records.append(TraceRecord(ts, comp, util, power))
    records.sort(key=lambda r: (r.timestamp, r.component))
    return records


def window_aggregate(records, spec: WindowSpec):
    """Aggregate utilization per (window, component).

    Returns ``(origin, {window_index: {component: value}})`` where window
    ``i`` covers ``[origin + i*w, origin + (i+1)*w)``.
    """
    if not records:
        return None, {}
    ts = np.array([r.timestamp for r in records], dtype=np.int64)
    origin = int(ts.min())
    win = (ts - origin) // int(spec.window_seconds)
    names = sorted({r.component for r in records})
    index = {c: i for i, c in enumerate(names)}
    comp = np.array([index[r.component] for r in records], dtype=np.int64)
    vals = np.array([r.utilization for r in records], dtype=np.float64)

    order = np.lexsort((vals, comp, win))
    win, comp, vals = win[order], comp[order], np.ascontiguousarray(vals[order])
    boundary = np.flatnonzero((np.diff(win) != 0) | (np.diff(comp) != 0)) + 1
    starts = np.concatenate(([0], boundary, [len(vals)])).astype(np.intp)
    agg = kernels.segment_reduce(vals, starts, _MODE[spec.aggregation])

    windows: dict[int, dict[str, float]] = {}
    for s, value in zip(starts[:-1], agg):
        windows.setdefault(int(win[s]), {})[names[comp[s]]] = float(value)
    return origin, windows


def state_from_template(template: StateGraph, state_id: str, utilization: dict[str, float]) -> StateGraph:
    """Restrict ``template`` to the components observed in one window.

    A measurable node is kept when it has an observation; a composite is
    kept when at least one child is kept. Weights of a composite that lost
    children are rescaled over the survivors.
    """
    present = set()
    for nid in topological_order(template):
        kids = template.children(nid)
        if kids:
            if any(c in present for c, _ in kids):
                present.add(nid)
        elif nid in utilization:
            present.add(nid)

    nodes = [replace(template.nodes[n], current_utilization=utilization.get(n)) for n in present]
    edges = []
    for nid in sorted(present):
        kids = template.children(nid)
        kept = [(c, w) for c, w in kids if c in present]
        if len(kept) == len(kids):
            edges.extend(UtilizationEdge(nid, c, w) for c, w in kept)
            continue
        total = sum(w for _, w in kept)
        if total <= 0:  # surviving children all carry zero weight
            kept = [(c, 1.0) for c, _ in kept]
            total = float(len(kept))
        edges.extend(UtilizationEdge(nid, c, w / total) for c, w in kept)
    cov = [(a, b, v) for a, b, v in template.covariances.pairs() if a in present and b in present]
    return StateGraph.build(state_id, nodes, edges, cov)


def states_from_records(records, spec: WindowSpec, template: StateGraph) -> list[StateGraph]:
    unknown = sorted({r.component for r in records} - set(template.nodes))
    if unknown:
        raise UnknownComponentError(f"trace components not in graph: {', '.join(unknown)}")
    origin, windows = window_aggregate(records, spec)
    width = int(spec.window_seconds)
    return [state_from_template(template, str(origin + i * width), windows[i]) for i in sorted(windows)]


def load_traces(path, spec: WindowSpec | None = None, template: StateGraph | None = None) -> list[StateGraph]:
    """One state graph per non-empty window of the trace file at ``path``."""
    spec = spec or WindowSpec()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror}") from None
    records = parse_traces(text)
    if template is None:
        raise ValueError("a template graph is required")
    return states_from_records(records, spec, template)


def traces_to_csv(records) -> str:
    has_power = any(r.power_watts is not None for r in records)
    buf = io.StringIO()
    buf.write(",".join(TRACE_HEADER + (("power_watts",) if has_power else ())) + "\n")
    for r in records:
        row = f"{r.timestamp},{r.component},{r.utilization:.6f}"
        if has_power:
            row += "," + ("" if r.power_watts is None else f"{r.power_watts:.6f}")
        buf.write(row + "\n")
    return buf.getvalue()
