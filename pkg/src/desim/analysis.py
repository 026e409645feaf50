"""Per-scenario link loads, worst-case utilisation and path impact.

Loads are accumulated demand by demand in matrix order, so any two routes
to the same numbers (cached or from scratch) agree bit for bit.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .model import Demand, Edge, FailureScenario, Topology, TrafficMatrix
from .routing import (
    UNREACHABLE,
    ResidualTopology,
    SpfResult,
    apply_failure,
    path_latency_extremes,
    shortest_paths,
    unit_flow,
)

WCPU_READINGS = ("a", "b")


class Evaluator:
    """Routing cache for one topology.

    Residual graphs, SPF trees, unit-flow vectors and path latencies are
    memoised per scenario; nothing here depends on traffic, so the cache
    stays valid as demands come and go.
    """

    def __init__(self, topo: Topology):
        self.topo = topo
        self.capacity = np.array([topo.capacity(e) for e in topo.edges], dtype=float)
        self._res: dict[FailureScenario, ResidualTopology] = {}
        self._spf: dict[tuple[FailureScenario, str], SpfResult] = {}
        self._unit: dict[tuple[FailureScenario, str, str], np.ndarray | None] = {}
        self._lat: dict[tuple[FailureScenario, str, str], float] = {}

    def residual(self, scenario: FailureScenario) -> ResidualTopology:
        res = self._res.get(scenario)
        if res is None:
            res = self._res[scenario] = apply_failure(self.topo, scenario)
        return res

    def spf(self, scenario: FailureScenario, src: str) -> SpfResult:
        key = (scenario, src)
        out = self._spf.get(key)
        if out is None:
            out = self._spf[key] = shortest_paths(self.residual(scenario), src)
        return out

    def unit(self, scenario: FailureScenario, src: str, dst: str) -> np.ndarray | None:
        """Unit-flow vector over edge indices, or None if the pair is unroutable."""
        key = (scenario, src, dst)
        if key in self._unit:
            return self._unit[key]
        res = self.residual(scenario)
        vec = None
        if src in res.alive_nodes and dst in res.alive_nodes:
            frac = unit_flow(res, self.spf(scenario, src), dst)
            if frac is not None:
                vec = np.zeros(len(self.topo.edges))
                for e, f in frac.items():
                    vec[self.topo.edge_index[e]] = f
        self._unit[key] = vec
        return vec

    def max_latency(self, scenario: FailureScenario, src: str, dst: str) -> float:
        key = (scenario, src, dst)
        out = self._lat.get(key)
        if out is None:
            res = self.residual(scenario)
            if src not in res.alive_nodes:
                out = UNREACHABLE
            else:
                out = path_latency_extremes(res, src, dst, self.spf(scenario, src)).max_ms
            self._lat[key] = out
        return out

    def endpoints_alive(self, scenario: FailureScenario, d: Demand) -> bool:
        alive = self.residual(scenario).alive_nodes
        return d.src in alive and d.dst in alive

    def accumulate(
        self, loads: np.ndarray, demands: Iterable[Demand], scenario: FailureScenario
    ) -> list[str]:
        """Add demands into ``loads`` in place; return ids of unrouted demands.

        Demands with a failed endpoint are skipped silently.
        """
        unrouted = []
        for d in demands:
            if not self.endpoints_alive(scenario, d):
                continue
            vec = self.unit(scenario, d.src, d.dst)
            if vec is None:
                unrouted.append(d.id)
                continue
            loads += d.bandwidth_mbps * vec
        return unrouted

    def load_vector(self, matrix: Iterable[Demand], scenario: FailureScenario) -> np.ndarray:
        loads = np.zeros(len(self.topo.edges))
        self.accumulate(loads, matrix, scenario)
        return loads

    def to_map(self, vec: np.ndarray) -> dict[Edge, float]:
        return {e: float(vec[i]) for i, e in enumerate(self.topo.edges)}


@dataclass(frozen=True)
class UtilizationReport:
    topology: Topology
    scenarios: tuple[FailureScenario, ...]
    per_scenario_loads: Mapping[FailureScenario, Mapping[Edge, float]]
    wc_link_util: Mapping[Edge, float]
    network_wc_util: float
    unrouted: frozenset[tuple[str, str]]  # (scenario name, demand id)

    def worst_scenario(self, edge: Edge) -> FailureScenario:
        cap = self.topology.capacity(edge)
        return max(self.scenarios, key=lambda s: self.per_scenario_loads[s][edge] / cap)

    def resilient_throughput_factor(self, threshold: float = 1.0) -> float:
        """Uniform demand growth factor before some link in some scenario passes ``threshold``.

        Informational: threshold / network_wc_util (inf when the network is empty).
        """
        return math.inf if self.network_wc_util == 0 else threshold / self.network_wc_util

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("scenario", "edge", "load_mbps", "utilization"))
        for s in self.scenarios:
            loads = self.per_scenario_loads[s]
            for e in self.topology.edges:
                w.writerow((s.name, e.label, repr(loads[e]), repr(loads[e] / self.topology.capacity(e))))
        w.writerow(("summary", "network_wc_util", "", repr(self.network_wc_util)))
        return buf.getvalue()


def link_loads(
    topo: Topology, matrix: TrafficMatrix | Iterable[Demand], scenario: FailureScenario,
    evaluator: Evaluator | None = None,
) -> dict[Edge, float]:
    ev = evaluator or Evaluator(topo)
    return ev.to_map(ev.load_vector(matrix, scenario))


def worst_case_utilization(
    topo: Topology,
    matrix: TrafficMatrix | Iterable[Demand],
    scenarios: Sequence[FailureScenario],
    evaluator: Evaluator | None = None,
) -> UtilizationReport:
    if not scenarios:
        raise ValueError("at least one scenario is required")
    ev = evaluator or Evaluator(topo)
    demands = list(matrix)
    per: dict[FailureScenario, dict[Edge, float]] = {}
    unrouted: set[tuple[str, str]] = set()
    wc = np.zeros(len(topo.edges))
    for s in scenarios:
        loads = np.zeros(len(topo.edges))
        unrouted.update((s.name, did) for did in ev.accumulate(loads, demands, s))
        per[s] = ev.to_map(loads)
        np.maximum(wc, loads / ev.capacity, out=wc)
    return UtilizationReport(
        topo,
        tuple(scenarios),
        per,
        ev.to_map(wc),
        float(wc.max()) if len(wc) else 0.0,
        frozenset(unrouted),
    )


@dataclass(frozen=True)
class PathImpact:
    used_edges: frozenset[Edge]
    wc_path_util: float
    wc_path_latency_ms: float
    any_unrouted: bool

    @property
    def remaining_r(self) -> float:
        return 1.0 - self.wc_path_util


def impact_from_base(
    ev: Evaluator,
    base_loads: Mapping[FailureScenario, np.ndarray],
    new_demands: Sequence[Demand],
    scenarios: Sequence[FailureScenario],
    reading: str = "a",
) -> PathImpact:
    """Path impact given precomputed existing-traffic loads per scenario."""
    if reading not in WCPU_READINGS:
        raise ValueError(f"unknown WCPU reading {reading!r}")
    n = len(ev.topo.edges)
    used = np.zeros(n, dtype=bool)
    wc = np.zeros(n)
    per_scenario_path = 0.0
    latency = 0.0
    any_unrouted = False
    for s in scenarios:
        loads = base_loads[s].copy()
        used_here = np.zeros(n, dtype=bool)
        for d in new_demands:
            if not ev.endpoints_alive(s, d):
                continue
            vec = ev.unit(s, d.src, d.dst)
            if vec is None:
                any_unrouted = True
                continue
            contrib = d.bandwidth_mbps * vec
            loads += contrib
            used_here |= contrib > 0
            latency = max(latency, ev.max_latency(s, d.src, d.dst))
        util = loads / ev.capacity
        np.maximum(wc, util, out=wc)
        used |= used_here
        if used_here.any():
            per_scenario_path = max(per_scenario_path, float(util[used_here].max()))
    if reading == "a":
        wcpu = float(wc[used].max()) if used.any() else 0.0
    else:
        wcpu = per_scenario_path
    edges = ev.topo.edges
    return PathImpact(
        frozenset(edges[i] for i in np.flatnonzero(used)),
        wcpu,
        latency,
        any_unrouted,
    )


def path_impact(
    topo: Topology,
    existing: TrafficMatrix | Iterable[Demand],
    new_demands: Sequence[Demand],
    scenarios: Sequence[FailureScenario],
    reading: str = "a",
    evaluator: Evaluator | None = None,
) -> PathImpact:
    """Worst-case path utilisation and latency of ``new_demands`` on top of ``existing``.

    With reading ``"a"`` the result is the largest across-scenario worst-case
    utilisation among edges the new demands touch in any scenario; reading
    ``"b"`` takes, per scenario, only the edges used in that scenario.
    """
    ev = evaluator or Evaluator(topo)
    existing = list(existing)
    base = {s: ev.load_vector(existing, s) for s in scenarios}
    return impact_from_base(ev, base, new_demands, scenarios, reading)
