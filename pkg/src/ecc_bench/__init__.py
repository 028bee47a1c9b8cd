"""Energy-efficiency graphs for edge-cloud systems: derive, merge, benchmark."""

from .aggregation import AnnotatedGraph, calibrate_epsilon, derive_composites
from .analysis import (
    BenchmarkThresholds,
    Category,
    GapRecord,
    GapReport,
    benchmark,
    efficiency_gap,
    error_margin,
    gap_report,
    rank_targets,
)
from .curves import (
    EfficiencyCurve,
    VarianceCurve,
    argmax_utilization,
    combine_variance,
    evaluate,
    linear_combine,
)
from .fitness import Action, FitnessRecommendation, FitnessTarget, apply_prune, assess, refine_until
from .graph import (
    ComponentNode,
    CovarianceTable,
    Kind,
    StateGraph,
    UtilizationEdge,
    classify,
    topological_order,
    validate,
)
from .ingestion import WindowSpec, load_graph, load_traces, save_graph
from .kernels import BACKEND
from .merging import MergedGraph, merge, renormalize_weights

__version__ = "0.1.0"
