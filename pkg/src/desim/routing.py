"""IGP shortest-path routing with equal-cost multipath under failures.

Flow toward a destination splits equally over every next-hop edge that lies
on a shortest path (per-hop split, as a router's forwarding table would).
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Mapping

from .model import Demand, Edge, FailureScenario, ModelError, NO_FAILURE, Topology

UNREACHABLE = math.inf


@dataclass(frozen=True)
class ResidualTopology:
    base: Topology
    scenario: FailureScenario
    alive_edges: frozenset[Edge]
    alive_nodes: frozenset[str]
    # node -> outgoing alive edges, ordered by (dst, circuit)
    out_edges: Mapping[str, tuple[Edge, ...]] = field(repr=False, compare=False)

    def __hash__(self) -> int:
        return hash((self.base, self.scenario))


@dataclass(frozen=True)
class SpfResult:
    source: str
    dist: Mapping[str, float]
    ecmp_preds: Mapping[str, frozenset[Edge]]

    def reachable(self, node: str) -> bool:
        return self.dist.get(node, UNREACHABLE) < UNREACHABLE


@dataclass(frozen=True)
class FlowMap:
    load: Mapping[Edge, float]
    unrouted: bool = False

    def total_out(self, node: str) -> float:
        return sum(v for e, v in self.load.items() if e.src == node)

    def total_in(self, node: str) -> float:
        return sum(v for e, v in self.load.items() if e.dst == node)


def apply_failure(topo: Topology, scenario: FailureScenario = NO_FAILURE) -> ResidualTopology:
    for cid in scenario.failed_circuits:
        if cid not in topo.circuit_map:
            raise ModelError(f"scenario {scenario.name} fails unknown circuit {cid!r}")
    for nid in scenario.failed_nodes:
        if nid not in topo.node_map:
            raise ModelError(f"scenario {scenario.name} fails unknown node {nid!r}")
    alive_nodes = frozenset(n for n in topo.node_map if n not in scenario.failed_nodes)
    alive = [
        e for e in topo.edges
        if e.circuit not in scenario.failed_circuits and e.src in alive_nodes and e.dst in alive_nodes
    ]
    out: dict[str, list[Edge]] = {n: [] for n in alive_nodes}
    for e in alive:
        out[e.src].append(e)
    return ResidualTopology(
        topo,
        scenario,
        frozenset(alive),
        alive_nodes,
        {n: tuple(sorted(es, key=lambda e: (e.dst, e.circuit))) for n, es in out.items()},
    )


def shortest_paths(res: ResidualTopology, src: str) -> SpfResult:
    """Dijkstra from ``src``; ties are settled in node-id order."""
    if src not in res.alive_nodes:
        raise ModelError(f"source {src!r} is not alive in scenario {res.scenario.name}")
    metric = {c.id: c.igp_metric for c in res.base.circuits}
    dist: dict[str, float] = {n: UNREACHABLE for n in res.alive_nodes}
    preds: dict[str, set[Edge]] = {n: set() for n in res.alive_nodes}
    dist[src] = 0
    heap = [(0, src)]
    done: set[str] = set()
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        for e in res.out_edges[u]:
            nd = d + metric[e.circuit]
            if nd < dist[e.dst]:
                dist[e.dst] = nd
                preds[e.dst] = {e}
                heapq.heappush(heap, (nd, e.dst))
            elif nd == dist[e.dst]:
                preds[e.dst].add(e)
    return SpfResult(src, dist, {n: frozenset(p) for n, p in preds.items()})


def _dag_toward(spf: SpfResult, dst: str) -> dict[str, list[Edge]]:
    """Next-hop edges per node on the shortest-path DAG from spf.source to dst."""
    nexthops: dict[str, list[Edge]] = {}
    on_dag = {dst}
    stack = [dst]
    while stack:
        v = stack.pop()
        for e in spf.ecmp_preds[v]:
            nexthops.setdefault(e.src, []).append(e)
            if e.src not in on_dag:
                on_dag.add(e.src)
                stack.append(e.src)
    for u in nexthops:
        nexthops[u].sort(key=lambda e: (e.dst, e.circuit))
    return nexthops


def unit_flow(res: ResidualTopology, spf: SpfResult, dst: str) -> dict[Edge, float] | None:
    """Fraction of one unit of src->dst traffic carried by each edge.

    Returns None when ``dst`` is down or unreachable.
    """
    src = spf.source
    if dst not in res.alive_nodes or not spf.reachable(dst):
        return None
    if src == dst:
        return {}
    nexthops = _dag_toward(spf, dst)
    order = sorted(nexthops, key=lambda n: (spf.dist[n], n))
    inflow = {src: 1.0}
    frac: dict[Edge, float] = {}
    for u in order:
        f = inflow.get(u, 0.0)
        if f == 0.0:
            continue
        hops = nexthops[u]
        share = f / len(hops)
        for e in hops:
            frac[e] = frac.get(e, 0.0) + share
            inflow[e.dst] = inflow.get(e.dst, 0.0) + share
    return frac


def route_demand(res: ResidualTopology, d: Demand, spf: SpfResult | None = None) -> FlowMap:
    """Per-edge Mbps for one demand; ``unrouted`` if an endpoint is down or cut off."""
    if d.src not in res.alive_nodes or d.dst not in res.alive_nodes:
        return FlowMap({}, unrouted=True)
    if spf is None:
        spf = shortest_paths(res, d.src)
    frac = unit_flow(res, spf, d.dst)
    if frac is None:
        return FlowMap({}, unrouted=True)
    return FlowMap({e: d.bandwidth_mbps * f for e, f in frac.items()})


@dataclass(frozen=True)
class LatencyExtremes:
    min_ms: float
    max_ms: float

    @property
    def reachable(self) -> bool:
        return self.max_ms < UNREACHABLE


UNREACHABLE_LATENCY = LatencyExtremes(UNREACHABLE, UNREACHABLE)


def path_latency_extremes(
    res: ResidualTopology, src: str, dst: str, spf: SpfResult | None = None
) -> LatencyExtremes:
    """Min and max summed latency over all ECMP shortest paths src->dst."""
    if src not in res.alive_nodes:
        raise ModelError(f"source {src!r} is not alive in scenario {res.scenario.name}")
    if spf is None:
        spf = shortest_paths(res, src)
    if dst not in res.alive_nodes or not spf.reachable(dst):
        return UNREACHABLE_LATENCY
    if src == dst:
        return LatencyExtremes(0.0, 0.0)
    latency = {c.id: c.latency_ms for c in res.base.circuits}
    nexthops = _dag_toward(spf, dst)
    lo = {src: 0.0}
    hi = {src: 0.0}
    for u in sorted(nexthops, key=lambda n: (spf.dist[n], n)):
        for e in nexthops[u]:
            a = lo[u] + latency[e.circuit]
            b = hi[u] + latency[e.circuit]
            if e.dst not in lo:
                lo[e.dst], hi[e.dst] = a, b
            else:
                lo[e.dst] = min(lo[e.dst], a)
                hi[e.dst] = max(hi[e.dst], b)
    return LatencyExtremes(lo[dst], hi[dst])
