"""Deterministic synthetic intra-logistics scenario.

A fleet vehicle (``av``) utilizes five on-board components; an edge server
utilizes the vehicle plus its own compute, and the cloud utilizes the edge
server plus its own compute. Each measurable component has a power model

    power(u) = baseline_watts * load(u) / load(u_nominal)
    load(u)  = idle + (1 - idle) * u**gamma

and its efficiency is useful work per watt, ``u / power(u)``, normalized to
the component's baseline peak. ``idle`` is chosen so that the efficiency
peaks at the catalog utilization. Power interventions scale the whole power
curve at fixed work, so efficiency rises by ``1 / power_scale`` (clipped at 1).

The processor's peak is solved numerically so that the vehicle composite
peaks at 81% utilization.

Traces are a diurnal duty cycle plus clipped Gaussian noise drawn from a
single PCG64 stream (numpy ``Generator``), one draw per (sample, component)
in sorted component order.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .aggregation import derive_composites
from .analysis import error_margin  # noqa: F401  re-exported
from .curves import DEFAULT_RESOLUTION, EfficiencyCurve, VarianceCurve, argmax_utilization
from .errors import UnknownInterventionTargetError
from .graph import ComponentNode, Kind, StateGraph
from .ingestion import TraceRecord, traces_to_csv

log = logging.getLogger(__name__)

AV_PEAK = 0.81
DECISION_LATENCY_MS = 85.0
TRACE_NOISE = 0.05
TRACE_START = 1_704_067_200  # 2024-01-01T00:00:00Z

VEHICLE = ("camera", "comm", "gps", "lidar", "processor")

AV_WEIGHTS = {"processor": 0.50, "camera": 0.21, "lidar": 0.18, "comm": 0.08, "gps": 0.03}
EDGE_WEIGHTS = {"av": 0.4, "edge_compute": 0.6}
CLOUD_WEIGHTS = {"edge_server": 0.3, "cloud_compute": 0.7}
COMPOSITE_EPSILON = {"av": 0.0, "edge_server": 0.0, "cloud": 0.0}


@dataclass(frozen=True)
class CatalogEntry:
    """Static description of one measurable component."""

    baseline_watts: float
    peak: float
    gamma: float
    nominal_utilization: float
    base_variance: float
    measurement_cost: float
    diurnal_amplitude: float = 0.10


# processor peak is a placeholder; build_power_model() solves it
CATALOG = {
    "lidar": CatalogEntry(8.0, 0.78, 2.5, 0.76, 0.0036, 4.0),
    "camera": CatalogEntry(8.0, 0.74, 2.5, 0.72, 0.0036, 3.0),
    "gps": CatalogEntry(5.0, 0.70, 2.0, 0.68, 0.0004, 5.0, 0.05),
    "processor": CatalogEntry(25.0, 0.87, 2.0, 0.45, 0.0120, 2.0),
    "comm": CatalogEntry(4.0, 0.90, 2.0, 0.40, 0.0025, 1.0),
    "edge_compute": CatalogEntry(180.0, 0.65, 2.0, 0.63, 0.0009, 2.0),
    "cloud_compute": CatalogEntry(450.0, 0.60, 2.0, 0.58, 0.0009, 3.0),
}

COVARIANCES = [("camera", "lidar", 0.0015)]

# composites run just below their derived peak
COMPOSITE_HEADROOM = 0.02


class InterventionKind(str, Enum):
    DVFS = "DVFS"
    TRANSMISSION_OPT = "TransmissionOpt"


@dataclass(frozen=True)
class Intervention:
    iteration: int
    target: str
    kind: InterventionKind
    power_scale: float

    def __post_init__(self):
        object.__setattr__(self, "kind", InterventionKind(self.kind))
        if not 0.0 < self.power_scale <= 1.0:
            raise ValueError(f"power_scale must lie in (0, 1], got {self.power_scale}")
        if self.iteration < 1:
            raise ValueError("interventions start at iteration 1")


DEFAULT_INTERVENTIONS = (
    Intervention(1, "processor", InterventionKind.DVFS, 0.8),
    Intervention(2, "comm", InterventionKind.TRANSMISSION_OPT, 0.75),
)


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 2024
    days: int = 7
    iterations: int = 2
    grid_resolution: int = DEFAULT_RESOLUTION
    sample_seconds: int = 300
    interventions: tuple[Intervention, ...] = DEFAULT_INTERVENTIONS

    def __post_init__(self):
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.days < 1 or self.iterations < 0 or self.grid_resolution < 1 or self.sample_seconds < 1:
            raise ValueError("days, grid_resolution and sample_seconds must be positive; iterations >= 0")
        for iv in self.interventions:
            if iv.iteration > self.iterations:
                raise ValueError(f"intervention on {iv.target} at iteration {iv.iteration} "
                                 f"exceeds iterations={self.iterations}")

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        data = dict(data)
        if "interventions" in data:
            data["interventions"] = tuple(Intervention(**iv) for iv in data["interventions"])
        return cls(**data)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["interventions"] = [{**asdict(iv), "kind": iv.kind.value} for iv in self.interventions]
        return out


DATA_DIR = Path(__file__).parent / "data"
DEFAULT_CONFIG_PATH = DATA_DIR / "default_scenario.json"
FIXTURE_PATH = DATA_DIR / "scenario_graph.json"


def load_config(path=DEFAULT_CONFIG_PATH) -> ScenarioConfig:
    return ScenarioConfig.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# -- power and efficiency ------------------------------------------------

def idle_fraction(peak: float, gamma: float) -> float:
    """Idle share of the load model that puts the work-per-watt peak at ``peak``."""
    r = (gamma - 1.0) * peak**gamma
    return r / (1.0 + r)


def _load(u, idle, gamma):
    return idle + (1.0 - idle) * np.power(u, gamma)


def relative_efficiency(u, peak: float, gamma: float):
    """Work per watt relative to the peak value; 1 at ``peak``."""
    idle = idle_fraction(peak, gamma)
    u = np.asarray(u, dtype=np.float64)
    return (u / _load(u, idle, gamma)) / (peak / _load(peak, idle, gamma))


@dataclass(frozen=True)
class ComponentPower:
    baseline_watts: float
    peak: float
    gamma: float
    nominal_utilization: float
    scale: float = 1.0

    def power(self, u: float) -> float:
        idle = idle_fraction(self.peak, self.gamma)
        ratio = _load(u, idle, self.gamma) / _load(self.nominal_utilization, idle, self.gamma)
        return float(self.baseline_watts * self.scale * ratio)

    @property
    def operating_watts(self) -> float:
        return self.baseline_watts * self.scale


@dataclass(frozen=True)
class PowerModel:
    components: dict[str, ComponentPower]
    vehicle: tuple[str, ...] = VEHICLE

    def power(self, name: str, u: float) -> float:
        return self.components[name].power(u)

    def operating_watts(self, name: str) -> float:
        return self.components[name].operating_watts

    def vehicle_watts(self, utilization: dict[str, float] | None = None) -> float:
        """Vehicle power as the sum of its components' powers.

        Without ``utilization`` every component sits at its nominal operating point.
        """
        if utilization is None:
            return sum(self.operating_watts(c) for c in self.vehicle)
        return sum(self.power(c, utilization.get(c, self.components[c].nominal_utilization))
                   for c in self.vehicle)

    def efficiency_curve(self, name: str, resolution: int = DEFAULT_RESOLUTION) -> EfficiencyCurve:
        c = self.components[name]
        grid = np.linspace(0.0, 1.0, resolution + 1)
        return EfficiencyCurve(np.clip(relative_efficiency(grid, c.peak, c.gamma) / c.scale, 0.0, 1.0))


def solve_peak(children: dict[str, tuple[float, float, float]], free: str,
               target: float = AV_PEAK, bracket=(0.5, 1.0)) -> float:
    """Peak utilization for child ``free`` that puts the composite's peak at ``target``.

    ``children`` maps id to ``(weight, peak, gamma)``; the peak given for
    ``free`` is ignored. Uses the continuous composite, not a sampled grid.
    """
    total = sum(w for w, _, _ in children.values())

    def composite_argmax(free_peak):
        def neg(u):
            acc = 0.0
            for name, (w, p, g) in children.items():
                acc += w / total * relative_efficiency(u, free_peak if name == free else p, g)
            return -acc
        return minimize_scalar(neg, bounds=(1e-3, 1.0), method="bounded",
                               options={"xatol": 1e-12}).x

    return float(brentq(lambda p: composite_argmax(p) - target, *bracket, xtol=1e-12))


def build_power_model(catalog=None) -> PowerModel:
    catalog = dict(catalog or CATALOG)
    children = {c: (AV_WEIGHTS[c], catalog[c].peak, catalog[c].gamma) for c in VEHICLE}
    proc = replace(catalog["processor"], peak=solve_peak(children, "processor"))
    catalog["processor"] = proc
    return PowerModel({
        name: ComponentPower(e.baseline_watts, e.peak, e.gamma, e.nominal_utilization)
        for name, e in sorted(catalog.items())
    })


def apply_interventions(model: PowerModel, config: ScenarioConfig, iteration: int) -> PowerModel:
    """Power model after every intervention scheduled at or before ``iteration``."""
    if not 0 <= iteration <= config.iterations:
        raise ValueError(f"iteration must lie in [0, {config.iterations}]")
    comps = dict(model.components)
    for iv in config.interventions:
        if iv.iteration > iteration:
            continue
        if iv.target not in comps:
            raise UnknownInterventionTargetError(iv.target)
        comps[iv.target] = replace(comps[iv.target], scale=comps[iv.target].scale * iv.power_scale)
        log.debug("iteration %d: %s on %s, power x%.3f", iv.iteration, iv.kind.value, iv.target, iv.power_scale)
    return replace(model, components=comps)


# -- graph and traces ------------------------------------------------------

def variance_curve(base: float, resolution: int = DEFAULT_RESOLUTION) -> VarianceCurve:
    """Measurement variance, larger at low load where relative noise dominates."""
    grid = np.linspace(0.0, 1.0, resolution + 1)
    return VarianceCurve(base * (1.25 - 0.5 * grid))


def build_graph(model: PowerModel, resolution: int = DEFAULT_RESOLUTION,
                catalog=None, state_id: str = "scenario") -> StateGraph:
    catalog = catalog or CATALOG
    nodes = []
    for name, comp in model.components.items():
        entry = catalog[name]
        nodes.append(ComponentNode(
            id=name, kind=Kind.MEASURABLE,
            curve=model.efficiency_curve(name, resolution),
            variance=variance_curve(entry.base_variance, resolution),
            measurement_cost=entry.measurement_cost,
            current_utilization=comp.nominal_utilization,
        ))
    for name, eps in COMPOSITE_EPSILON.items():
        nodes.append(ComponentNode(id=name, kind=Kind.COMPOSITE, epsilon=eps, measurement_cost=1.0))
    edges = [("av", c, w) for c, w in AV_WEIGHTS.items()]
    edges += [("edge_server", c, w) for c, w in EDGE_WEIGHTS.items()]
    edges += [("cloud", c, w) for c, w in CLOUD_WEIGHTS.items()]
    graph = StateGraph.build(state_id, nodes, edges, COVARIANCES)

    annotated = derive_composites(graph)
    updated = []
    for name in COMPOSITE_EPSILON:
        peak = argmax_utilization(annotated.curve(name))
        u = round(max(0.0, peak - COMPOSITE_HEADROOM), 6)
        updated.append(replace(graph.nodes[name], current_utilization=u))
    return graph.with_nodes(updated)


def generate_traces(graph: StateGraph, config: ScenarioConfig) -> list[TraceRecord]:
    names = sorted(graph.nodes)
    means = np.array([graph.nodes[n].current_utilization for n in names])
    amps = np.array([CATALOG[n].diurnal_amplitude if n in CATALOG else 0.08 for n in names])
    phases = np.linspace(0.0, np.pi, len(names))

    steps = config.days * 86400 // config.sample_seconds
    t = np.arange(steps, dtype=np.int64) * config.sample_seconds
    rng = np.random.Generator(np.random.PCG64(config.seed))
    noise = rng.normal(0.0, TRACE_NOISE, size=(steps, len(names)))
    day = 2.0 * np.pi * (t % 86400) / 86400.0
    util = means + amps * np.sin(day[:, None] - phases) + noise
    util = np.round(np.clip(util, 0.0, 1.0), 6)

    return [TraceRecord(int(TRACE_START + t[i]), names[j], float(util[i, j]))
            for i in range(steps) for j in range(len(names))]


@dataclass
class Scenario:
    config: ScenarioConfig
    graph: StateGraph
    power: PowerModel
    traces: list[TraceRecord] = field(repr=False)

    @property
    def traces_csv(self) -> str:
        return traces_to_csv(self.traces)

    def power_at(self, iteration: int) -> PowerModel:
        return apply_interventions(self.power, self.config, iteration)

    def graph_at(self, iteration: int) -> StateGraph:
        """Scenario graph whose efficiency curves reflect the interventions up to ``iteration``."""
        model = self.power_at(iteration)
        res = self.config.grid_resolution
        updated = [replace(self.graph.nodes[c], curve=model.efficiency_curve(c, res))
                   for c in model.components if model.components[c].scale != 1.0]
        return self.graph.with_nodes(updated)

    def summary(self) -> dict:
        base = self.power_at(0)
        rows = []
        for k in range(self.config.iterations + 1):
            m = self.power_at(k)
            rows.append({
                "iteration": k,
                "vehicle_watts": round(m.vehicle_watts(), 9),
                "component_watts": {c: round(m.operating_watts(c), 9) for c in VEHICLE},
                "decision_latency_ms": DECISION_LATENCY_MS,
            })
        final = self.power_at(self.config.iterations)
        b, f = base.vehicle_watts(), final.vehicle_watts()
        return {
            "seed": self.config.seed,
            "days": self.config.days,
            "hourly_states": self.config.days * 24,
            "av_peak_utilization": argmax_utilization(derive_composites(self.graph).curve("av")),
            "baseline_vehicle_watts": round(b, 9),
            "final_vehicle_watts": round(f, 9),
            "vehicle_reduction_pct": round(100.0 * (b - f) / b, 9),
            "component_reduction_pct": {
                c: round(100.0 * (1.0 - final.operating_watts(c) / base.operating_watts(c)), 9)
                for c in VEHICLE
            },
            "iterations": rows,
            "config": self.config.to_dict(),
        }


def generate(config: ScenarioConfig | None = None) -> Scenario:
    config = config or ScenarioConfig()
    model = build_power_model()
    graph = build_graph(model, config.grid_resolution)
    return Scenario(config, graph, model, generate_traces(graph, config))
