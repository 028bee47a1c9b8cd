"""Command-line entry point.

Exit codes: 0 success, 2 validation findings, 3 input error, 4 analysis error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

from . import analysis, fitness, ingestion, merging, scenario
from .errors import EccError, ParseError, SchemaError, UnknownComponentError, ValidationError
from .graph import validate

EXIT_OK, EXIT_FINDINGS, EXIT_INPUT, EXIT_ANALYSIS = 0, 2, 3, 4

log = logging.getLogger("ecc_bench")

ANALYZE_DEFAULTS = {"window": 3600, "agg": "mean", "a": 0.1, "b": 0.3, "curve_mode": "rederive"}


class StageError(Exception):
    def __init__(self, stage, exc, code):
        super().__init__(f"{stage}: {exc}")
        self.code = code


def _stage(name, fn, *args, **kwargs):
    """Run one pipeline stage, mapping failures onto exit codes."""
    try:
        return fn(*args, **kwargs)
    except ValidationError as exc:
        raise StageError(name, exc, EXIT_FINDINGS) from exc
    except (ParseError, SchemaError, UnknownComponentError, OSError) as exc:
        raise StageError(name, exc, EXIT_INPUT) from exc
    except (EccError, ValueError, KeyError) as exc:
        raise StageError(name, exc, EXIT_ANALYSIS) from exc


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8", newline="\n")


def _fmt(x):
    return format(float(x), ".12g")


def curve_csv(curve, variance) -> str:
    lines = ["utilization,efficiency,variance"]
    for u, e, v in zip(curve.grid, curve.samples, variance.samples):
        lines.append(f"{_fmt(u)},{_fmt(e)},{_fmt(v)}")
    return "\n".join(lines) + "\n"


def _load_states(args, settings):
    template = _stage("load graph", ingestion.load_graph, args.graph)
    spec = _stage("window spec", ingestion.WindowSpec, int(settings["window"]), settings["agg"])
    states = _stage("ingest traces", ingestion.load_traces, args.traces, spec, template)
    if not states:
        raise StageError("ingest traces", "trace file holds no records", EXIT_INPUT)
    merged = _stage("merge", merging.merge, states, settings["curve_mode"])
    return template, states, merged


def _settings(args, keys, defaults):
    """Config-file values overlaid by explicitly given flags."""
    out = dict(defaults)
    if getattr(args, "config", None):
        data = _stage("load config", lambda p: json.loads(Path(p).read_text(encoding="utf-8")), args.config)
        out.update({k: data[k] for k in keys if k in data})
    for k in keys:
        value = getattr(args, k, None)
        if value is not None:
            out[k] = value
    return out


# -- commands -------------------------------------------------------------

def cmd_validate(args):
    try:
        graph = ingestion.load_graph(args.graph, validate_graph=False)
    except (ParseError, SchemaError) as exc:
        print(json.dumps({"valid": False, "error": str(exc)}, indent=2))
        return EXIT_INPUT
    violations = validate(graph)
    print(json.dumps({"valid": not violations, "state_id": graph.state_id,
                      "violations": [v.to_dict() for v in violations]}, indent=2))
    return EXIT_FINDINGS if violations else EXIT_OK


def cmd_analyze(args):
    settings = _settings(args, ANALYZE_DEFAULTS, ANALYZE_DEFAULTS)
    _, states, merged = _load_states(args, settings)
    thresholds = _stage("thresholds", analysis.BenchmarkThresholds, float(settings["a"]), float(settings["b"]))
    report = _stage("gap", analysis.gap_report, merged)
    categories = analysis.benchmark(report, thresholds)

    out = Path(args.out_dir)
    _write(out / "gaps.json", analysis.report_to_json(report, categories, thresholds))
    _write(out / "gaps.csv", analysis.report_to_csv(report, categories))
    _write(out / "merged.json", ingestion.dumps(ingestion.merged_to_dict(merged)))
    for nid in sorted(merged.annotated.curves):
        _write(out / "curves" / f"{nid}.csv", curve_csv(merged.curve(nid), merged.variance(nid)))

    print(f"{len(states)} states merged; ranking by efficiency gap:")
    for nid in analysis.rank_targets(report):
        print(f"  {nid:<16} {report[nid].gap:.4f}  {categories[nid].value}")
    return EXIT_OK


def _scenario_config(args) -> scenario.ScenarioConfig:
    if args.config:
        data = _stage("load config", lambda p: json.loads(Path(p).read_text(encoding="utf-8")), args.config)
    else:
        data = {}
    env_seed = os.environ.get("ECC_BENCH_SEED")
    if env_seed is not None:
        data["seed"] = int(env_seed)
    for key in ("seed", "days", "iterations", "grid_resolution", "sample_seconds"):
        value = getattr(args, key, None)
        if value is not None:
            data[key] = value
    if "iterations" in data and "interventions" not in data:
        data["interventions"] = [
            {**asdict(iv), "kind": iv.kind.value}
            for iv in scenario.DEFAULT_INTERVENTIONS if iv.iteration <= data["iterations"]
        ]
    return _stage("config", scenario.ScenarioConfig.from_dict, data)


def cmd_simulate(args):
    config = _scenario_config(args)
    sc = _stage("simulate", scenario.generate, config)
    out = Path(args.out_dir)
    _write(out / "graph.json", ingestion.dumps(ingestion.graph_to_dict(sc.graph)))
    for k in range(1, config.iterations + 1):
        _write(out / f"graph_iter{k}.json", ingestion.dumps(ingestion.graph_to_dict(sc.graph_at(k))))
    _write(out / "traces.csv", sc.traces_csv)
    summary = sc.summary()
    _write(out / "summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"baseline vehicle power {summary['baseline_vehicle_watts']:.2f} W; "
          f"after {config.iterations} iteration(s) {summary['final_vehicle_watts']:.2f} W "
          f"({summary['vehicle_reduction_pct']:.1f}% reduction)")
    return EXIT_OK


def cmd_fitness(args):
    settings = _settings(args, ANALYZE_DEFAULTS, ANALYZE_DEFAULTS)
    _, _, merged = _load_states(args, settings)
    if args.refine_margin is not None:
        result = _stage("fitness", fitness.refine_until, merged, args.target, args.refine_margin,
                        args.factor, args.max_iter)
        payload = {"target": args.target, "converged": result.converged,
                   "margins_pct": result.margins, "refined": result.refined}
    else:
        target = _stage("fitness", fitness.FitnessTarget, args.target, args.vmin, args.vmax)
        rec = _stage("fitness", fitness.assess, merged, target, args.variance_at)
        payload = {"target": args.target, **rec.to_dict()}
    text = json.dumps(payload, indent=2) + "\n"
    if args.out:
        _write(Path(args.out), text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_merge(args):
    graphs = [_stage("load graph", ingestion.load_graph, p) for p in args.graphs]
    merged = _stage("merge", merging.merge, graphs, args.curve_mode, not args.no_renormalize)
    text = ingestion.dumps(ingestion.merged_to_dict(merged))
    if args.out:
        _write(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_gap(args):
    graph = _stage("load graph", ingestion.load_graph, args.graph)
    if args.traces:
        spec = ingestion.WindowSpec(args.window, args.agg)
        states = _stage("ingest traces", ingestion.load_traces, args.traces, spec, graph)
        merged = _stage("merge", merging.merge, states or [graph])
    else:
        merged = _stage("merge", merging.merge, [graph])
    rec = _stage("gap", analysis.efficiency_gap, merged, args.component, args.utilization)
    thresholds = _stage("thresholds", analysis.BenchmarkThresholds, args.a, args.b)
    payload = {**asdict(rec), "category": analysis.categorize(rec.gap, thresholds).value}
    print(json.dumps(payload, indent=2))
    return EXIT_OK


# -- parser -----------------------------------------------------------------

def _add_window_flags(p, with_config=True):
    p.add_argument("--window", type=int, help="window length in seconds (default 3600)")
    p.add_argument("--agg", choices=[a.value for a in ingestion.Aggregation],
                   help="per-window utilization aggregate (default mean)")
    p.add_argument("--curve-mode", dest="curve_mode", choices=merging.CURVE_MODES,
                   help="how merged composite curves are formed (default rederive)")
    if with_config:
        p.add_argument("--config", help="JSON file with window/agg/a/b/curve_mode keys")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ecc-bench", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a graph file against the structural rules")
    p.add_argument("graph")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("analyze", help="ingest traces, merge states, compute and rank gaps")
    p.add_argument("graph")
    p.add_argument("traces")
    _add_window_flags(p)
    p.add_argument("--a", type=float, help="well-tuned threshold (default 0.1)")
    p.add_argument("--b", type=float, help="misconfigured threshold (default 0.3)")
    p.add_argument("--out-dir", default="analysis_out")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("simulate", help="generate the synthetic intra-logistics scenario")
    p.add_argument("config", nargs="?", help="scenario config JSON")
    p.add_argument("--seed", type=int)
    p.add_argument("--days", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--grid-resolution", dest="grid_resolution", type=int)
    p.add_argument("--sample-seconds", dest="sample_seconds", type=int)
    p.add_argument("--out-dir", default="scenario_out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fitness", help="model-fitness recommendation for a target node")
    p.add_argument("graph")
    p.add_argument("traces")
    p.add_argument("--target", required=True)
    p.add_argument("--vmin", type=float, default=0.0)
    p.add_argument("--vmax", type=float, default=float("inf"))
    p.add_argument("--variance-at", dest="variance_at", choices=fitness.VARIANCE_AT, default="current")
    p.add_argument("--refine-margin", dest="refine_margin", type=float,
                   help="run the refine loop until the error margin (percent) drops below this")
    p.add_argument("--factor", type=float, default=4.0, help="variance reduction per refinement")
    p.add_argument("--max-iter", dest="max_iter", type=int, default=5)
    p.add_argument("--out")
    _add_window_flags(p)
    p.set_defaults(func=cmd_fitness)

    p = sub.add_parser("merge", help="merge state graph files into one graph")
    p.add_argument("graphs", nargs="+")
    p.add_argument("--curve-mode", dest="curve_mode", choices=merging.CURVE_MODES, default="rederive")
    p.add_argument("--no-renormalize", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("gap", help="efficiency gap of a single component")
    p.add_argument("graph")
    p.add_argument("--component", required=True)
    p.add_argument("--utilization", type=float, help="override the current utilization")
    p.add_argument("--traces")
    p.add_argument("--window", type=int, default=3600)
    p.add_argument("--agg", choices=[a.value for a in ingestion.Aggregation], default="mean")
    p.add_argument("--a", type=float, default=0.1)
    p.add_argument("--b", type=float, default=0.3)
    p.set_defaults(func=cmd_gap)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
