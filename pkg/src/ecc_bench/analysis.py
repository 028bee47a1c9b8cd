"""Efficiency gaps, benchmark categories and optimization priority."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from enum import Enum

from .curves import argmax_utilization, check_utilization, evaluate
from .errors import MissingUtilizationError, UnknownNodeError, ZeroEfficiencyError
from .merging import MergedGraph


class Category(str, Enum):
    WELL_TUNED = "WellTuned"
    PARTIALLY_OPTIMIZED = "PartiallyOptimized"
    MISCONFIGURED = "Misconfigured"


@dataclass(frozen=True)
class BenchmarkThresholds:
    a: float = 0.1
    b: float = 0.3

    def __post_init__(self):
        if not (0.0 <= self.a <= self.b <= 1.0):
            raise ValueError(f"thresholds must satisfy 0 <= a <= b <= 1, got a={self.a}, b={self.b}")


@dataclass(frozen=True)
class GapRecord:
    id: str
    u_opt: float
    u_current: float
    eta_opt: float
    eta_current: float
    sigma2_opt: float
    sigma2_current: float
    gap: float


@dataclass
class GapReport:
    records: dict[str, GapRecord] = field(default_factory=dict)
    # components left out of the report and why
    excluded: dict[str, str] = field(default_factory=dict)

    def __getitem__(self, node_id):
        return self.records[node_id]

    def __iter__(self):
        return iter(self.records.values())

    def __len__(self):
        return len(self.records)

    def gaps(self) -> dict[str, float]:
        return {k: r.gap for k, r in self.records.items()}


def gap_value(eta_opt, eta_current, sigma2_opt, sigma2_current) -> float:
    """Efficiency difference inflated by the combined standard deviation, capped at 1."""
    return min(1.0, abs(eta_opt - eta_current) + math.sqrt(sigma2_opt + sigma2_current))


def efficiency_gap(merged: MergedGraph, component: str, u_current: float | None = None) -> GapRecord:
    if component not in merged.nodes:
        raise UnknownNodeError(component)
    if u_current is None:
        u_current = merged.utilization(component)
    if u_current is None:
        raise MissingUtilizationError(f"{component} has no current utilization")
    u_current = check_utilization(u_current)
    curve = merged.curve(component)
    variance = merged.variance(component)
    u_opt = argmax_utilization(curve)
    eta_opt = evaluate(curve, u_opt)
    eta_cur = evaluate(curve, u_current)
    s_opt = evaluate(variance, u_opt)
    s_cur = evaluate(variance, u_current)
    return GapRecord(component, u_opt, u_current, eta_opt, eta_cur, s_opt, s_cur,
                     gap_value(eta_opt, eta_cur, s_opt, s_cur))


def gap_report(merged: MergedGraph, components=None) -> GapReport:
    """Gap records for ``components`` (default: every node).

    Nodes without derived curves or without a known utilization are listed
    in ``excluded`` instead of raising.
    """
    report = GapReport()
    ids = sorted(merged.nodes) if components is None else list(components)
    for nid in ids:
        if nid in merged.flagged:
            report.excluded[nid] = "zero outgoing weight after merge"
            continue
        if merged.annotated is None or nid not in merged.annotated.curves:
            report.excluded[nid] = "no derived curve"
            continue
        try:
            report.records[nid] = efficiency_gap(merged, nid)
        except MissingUtilizationError:
            report.excluded[nid] = "no current utilization"
    return report


def categorize(gap: float, thresholds: BenchmarkThresholds) -> Category:
    if gap < thresholds.a:
        return Category.WELL_TUNED
    if gap <= thresholds.b:
        return Category.PARTIALLY_OPTIMIZED
    return Category.MISCONFIGURED


def benchmark(report: GapReport, thresholds: BenchmarkThresholds | None = None) -> dict[str, Category]:
    thresholds = thresholds or BenchmarkThresholds()
    return {r.id: categorize(r.gap, thresholds) for r in report}


def rank_targets(report: GapReport) -> list[str]:
    """Component ids by descending gap; equal gaps fall back to id order."""
    return [r.id for r in sorted(report, key=lambda r: (-r.gap, r.id))]


CSV_COLUMNS = ("component", "gap", "category", "u_opt", "u_current", "eta_opt", "eta_current")


def _fmt(x: float) -> str:
    return format(x, ".12g")


def report_to_csv(report: GapReport, categories: dict[str, Category]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for nid in rank_targets(report):
        r = report[nid]
        writer.writerow([nid, _fmt(r.gap), categories[nid].value, _fmt(r.u_opt),
                         _fmt(r.u_current), _fmt(r.eta_opt), _fmt(r.eta_current)])
    return buf.getvalue()


def report_to_dict(report: GapReport, categories: dict[str, Category],
                   thresholds: BenchmarkThresholds) -> dict:
    ranking = rank_targets(report)
    return {
        "thresholds": asdict(thresholds),
        "ranking": ranking,
        "components": [{**asdict(report[nid]), "category": categories[nid].value} for nid in ranking],
        "excluded": dict(sorted(report.excluded.items())),
    }


def report_to_json(report, categories, thresholds) -> str:
    return json.dumps(report_to_dict(report, categories, thresholds), indent=2, sort_keys=True) + "\n"


def error_margin(merged: MergedGraph, node: str) -> float:
    """Relative standard deviation of a node's efficiency at its current utilization, in percent."""
    if node not in merged.nodes:
        raise UnknownNodeError(node)
    u = merged.utilization(node)
    if u is None:
        raise MissingUtilizationError(f"{node} has no current utilization")
    eta = evaluate(merged.curve(node), u)
    if eta == 0.0:
        raise ZeroEfficiencyError(f"{node} has zero efficiency at u={u}")
    return 100.0 * math.sqrt(evaluate(merged.variance(node), u)) / eta
