"""Network model: topology, demands, failure scenarios and their file formats.

Topology documents are JSON::

    {"version": 1,
     "nodes": [{"id": "chi", "dc": true, "access": true}, ...],
     "circuits": [{"id": "chi-nyc", "a": "chi", "b": "nyc",
                   "capacity_mbps": 10000, "latency_ms": 9.0,
                   "metric": 90, "srlgs": ["fiber7"]}, ...]}

Demand documents are CSV with an optional ``# version: 1`` marker and an
optional ``id,src,dst,mbps`` header.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, NamedTuple

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
DEMAND_HEADER = ("id", "src", "dst", "mbps")


class ModelError(ValueError):
    """Invalid topology, demand or scenario input."""

    def __init__(self, message: str, *, line: int | None = None, field: str | None = None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class Edge(NamedTuple):
    """One direction of a circuit."""

    circuit: str
    src: str
    dst: str

    @property
    def label(self) -> str:
        return f"{self.src}->{self.dst}@{self.circuit}"


@dataclass(frozen=True)
class Node:
    id: str
    is_dc_site: bool = False
    is_access_site: bool = False


@dataclass(frozen=True)
class Circuit:
    id: str
    end_a: str
    end_b: str
    capacity_mbps: float
    latency_ms: float
    igp_metric: int
    srlg_ids: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        object.__setattr__(self, "srlg_ids", frozenset(self.srlg_ids))

    @property
    def forward(self) -> Edge:
        return Edge(self.id, self.end_a, self.end_b)

    @property
    def reverse(self) -> Edge:
        return Edge(self.id, self.end_b, self.end_a)


@dataclass(frozen=True)
class Topology:
    """Validated, immutable network.

    Directed edges are indexed in circuit order, forward direction first,
    so ``edges[2*i]`` and ``edges[2*i + 1]`` belong to ``circuits[i]``.
    """

    nodes: tuple[Node, ...]
    circuits: tuple[Circuit, ...]
    srlgs: Mapping[str, frozenset[str]] = field(init=False)
    edges: tuple[Edge, ...] = field(init=False, repr=False)
    edge_index: Mapping[Edge, int] = field(init=False, repr=False, compare=False)
    node_map: Mapping[str, Node] = field(init=False, repr=False, compare=False)
    circuit_map: Mapping[str, Circuit] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        nodes = tuple(self.nodes)
        circuits = tuple(self.circuits)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "circuits", circuits)

        node_map: dict[str, Node] = {}
        for n in nodes:
            if not n.id:
                raise ModelError("empty node id", field="id")
            if n.id in node_map:
                raise ModelError(f"duplicate node id {n.id!r}", field="id")
            node_map[n.id] = n

        circuit_map: dict[str, Circuit] = {}
        srlgs: dict[str, set[str]] = {}
        for c in circuits:
            if c.id in circuit_map:
                raise ModelError(f"duplicate circuit id {c.id!r}", field="id")
            for end in (c.end_a, c.end_b):
                if end not in node_map:
                    raise ModelError(f"circuit {c.id!r} references unknown node {end!r}")
            if c.end_a == c.end_b:
                raise ModelError(f"circuit {c.id!r} is a self-loop on {c.end_a!r}")
            if not (c.capacity_mbps > 0 and math.isfinite(c.capacity_mbps)):
                raise ModelError(f"circuit {c.id!r} capacity must be > 0", field="capacity_mbps")
            if not (c.latency_ms >= 0 and math.isfinite(c.latency_ms)):
                raise ModelError(f"circuit {c.id!r} latency must be >= 0", field="latency_ms")
            if isinstance(c.igp_metric, bool) or not isinstance(c.igp_metric, int) or c.igp_metric <= 0:
                raise ModelError(f"circuit {c.id!r} metric must be a positive integer", field="metric")
            circuit_map[c.id] = c
            for s in c.srlg_ids:
                srlgs.setdefault(s, set()).add(c.id)

        edges: list[Edge] = []
        for c in circuits:
            edges.extend((c.forward, c.reverse))

        object.__setattr__(self, "node_map", node_map)
        object.__setattr__(self, "circuit_map", circuit_map)
        object.__setattr__(self, "srlgs", {k: frozenset(v) for k, v in sorted(srlgs.items())})
        object.__setattr__(self, "edges", tuple(edges))
        object.__setattr__(self, "edge_index", {e: i for i, e in enumerate(edges)})

        if nodes and not self.is_connected():
            logger.warning("topology is not connected with no failures")

    def __hash__(self) -> int:
        return hash((self.nodes, self.circuits))

    @property
    def node_ids(self) -> list[str]:
        return [n.id for n in self.nodes]

    @property
    def dc_sites(self) -> list[str]:
        return [n.id for n in self.nodes if n.is_dc_site]

    @property
    def access_sites(self) -> list[str]:
        return [n.id for n in self.nodes if n.is_access_site]

    def capacity(self, edge: Edge) -> float:
        return self.circuit_map[edge.circuit].capacity_mbps

    def incident_circuits(self, node_id: str) -> frozenset[str]:
        return frozenset(c.id for c in self.circuits if node_id in (c.end_a, c.end_b))

    def is_connected(self) -> bool:
        if not self.nodes:
            return True
        adj: dict[str, set[str]] = {n.id: set() for n in self.nodes}
        for c in self.circuits:
            adj[c.end_a].add(c.end_b)
            adj[c.end_b].add(c.end_a)
        start = self.nodes[0].id
        seen = {start}
        stack = [start]
        while stack:
            for nxt in adj[stack.pop()]:
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        return len(seen) == len(self.nodes)

    def scaled(self, factor: float) -> Topology:
        """Copy with every circuit capacity multiplied by ``factor``."""
        return Topology(
            self.nodes,
            tuple(
                Circuit(c.id, c.end_a, c.end_b, c.capacity_mbps * factor, c.latency_ms, c.igp_metric, c.srlg_ids)
                for c in self.circuits
            ),
        )


@dataclass(frozen=True)
class Demand:
    id: str
    src: str
    dst: str
    bandwidth_mbps: float

    def __post_init__(self) -> None:
        if self.src == self.dst:
            raise ModelError(f"demand {self.id!r} has src == dst ({self.src!r})")
        if not (self.bandwidth_mbps >= 0 and math.isfinite(self.bandwidth_mbps)):
            raise ModelError(f"demand {self.id!r} bandwidth must be >= 0", field="mbps")


@dataclass(frozen=True)
class TrafficMatrix:
    demands: tuple[Demand, ...] = ()

    def __post_init__(self) -> None:
        demands = tuple(self.demands)
        object.__setattr__(self, "demands", demands)
        seen: set[str] = set()
        for d in demands:
            if d.id in seen:
                raise ModelError(f"duplicate demand id {d.id!r}", field="id")
            seen.add(d.id)

    def __len__(self) -> int:
        return len(self.demands)

    def __iter__(self) -> Iterator[Demand]:
        return iter(self.demands)

    def validate_against(self, topo: Topology) -> None:
        for d in self.demands:
            for end in (d.src, d.dst):
                if end not in topo.node_map:
                    raise ModelError(f"demand {d.id!r} references unknown node {end!r}")

    def extended(self, demands: Iterable[Demand]) -> TrafficMatrix:
        return TrafficMatrix(self.demands + tuple(demands))

    def without(self, demand_ids: Iterable[str]) -> TrafficMatrix:
        drop = set(demand_ids)
        return TrafficMatrix(tuple(d for d in self.demands if d.id not in drop))

    def scaled(self, factor: float) -> TrafficMatrix:
        return TrafficMatrix(tuple(Demand(d.id, d.src, d.dst, d.bandwidth_mbps * factor) for d in self.demands))


SCENARIO_KINDS = ("none", "circuit", "node", "srlg")


@dataclass(frozen=True)
class FailureScenario:
    kind: str = "none"
    failed_circuits: frozenset[str] = frozenset()
    failed_nodes: frozenset[str] = frozenset()
    element: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "failed_circuits", frozenset(self.failed_circuits))
        object.__setattr__(self, "failed_nodes", frozenset(self.failed_nodes))
        if self.kind not in SCENARIO_KINDS:
            raise ModelError(f"unknown scenario kind {self.kind!r}")
        if self.kind == "none" and (self.failed_circuits or self.failed_nodes):
            raise ModelError("scenario 'none' cannot fail elements")
        if self.kind == "circuit" and (len(self.failed_circuits) != 1 or self.failed_nodes):
            raise ModelError("circuit scenario must fail exactly one circuit")
        if self.kind == "node" and len(self.failed_nodes) != 1:
            raise ModelError("node scenario must fail exactly one node")

    @property
    def name(self) -> str:
        if self.kind == "none":
            return "none"
        if self.element is not None:
            return f"{self.kind}:{self.element}"
        members = self.failed_nodes if self.kind == "node" else self.failed_circuits
        return f"{self.kind}:{'+'.join(sorted(members))}"

    @classmethod
    def circuit(cls, circuit_id: str) -> FailureScenario:
        return cls("circuit", frozenset({circuit_id}), element=circuit_id)

    @classmethod
    def node(cls, topo: Topology, node_id: str) -> FailureScenario:
        if node_id not in topo.node_map:
            raise ModelError(f"unknown node {node_id!r}")
        return cls("node", topo.incident_circuits(node_id), frozenset({node_id}), element=node_id)

    @classmethod
    def srlg(cls, topo: Topology, srlg_id: str) -> FailureScenario:
        if srlg_id not in topo.srlgs:
            raise ModelError(f"unknown srlg {srlg_id!r}")
        return cls("srlg", topo.srlgs[srlg_id], element=srlg_id)


NO_FAILURE = FailureScenario()


@dataclass(frozen=True)
class FailureSetSpec:
    include_none: bool = True
    include_circuits: bool = False
    include_nodes: bool = False
    include_srlgs: bool = False

    def __post_init__(self) -> None:
        if not self.include_none:
            raise ModelError("the no-failure scenario is always evaluated (include_none must be true)")

    _NAMES = {"none": "include_none", "circuits": "include_circuits", "links": "include_circuits",
              "nodes": "include_nodes", "srlgs": "include_srlgs"}

    @classmethod
    def from_names(cls, names: Iterable[str]) -> FailureSetSpec:
        """Build from names such as ``["none", "circuits", "srlgs"]``; ``none`` is implied."""
        flags = {"include_none": True}
        for name in names:
            key = cls._NAMES.get(name.strip().lower())
            if key is None:
                raise ModelError(f"unknown failure set {name!r}", field="failure_sets")
            flags[key] = True
        return cls(**flags)

    def names(self) -> list[str]:
        out = ["none"]
        if self.include_circuits:
            out.append("circuits")
        if self.include_nodes:
            out.append("nodes")
        if self.include_srlgs:
            out.append("srlgs")
        return out


ALL_FAILURES = FailureSetSpec(True, True, True, True)


def enumerate_scenarios(topo: Topology, spec: FailureSetSpec) -> list[FailureScenario]:
    """List scenarios: none, then circuits, nodes and SRLGs, each in id order."""
    out: list[FailureScenario] = []
    if spec.include_none:
        out.append(NO_FAILURE)
    if spec.include_circuits:
        out.extend(FailureScenario.circuit(cid) for cid in sorted(topo.circuit_map))
    if spec.include_nodes:
        out.extend(FailureScenario.node(topo, nid) for nid in sorted(topo.node_map))
    if spec.include_srlgs:
        out.extend(FailureScenario.srlg(topo, sid) for sid in sorted(topo.srlgs))
    return out


# -- file formats -----------------------------------------------------------


def _check_version(value: object, line: int | None = None) -> None:
    if value != FORMAT_VERSION:
        raise ModelError(f"unsupported format version {value!r}", line=line, field="version")


def _require(obj: Mapping, key: str, kind: type | tuple[type, ...], where: str):
    if key not in obj:
        raise ModelError(f"{where}: missing field", field=key)
    value = obj[key]
    if isinstance(value, bool) and bool not in (kind if isinstance(kind, tuple) else (kind,)):
        raise ModelError(f"{where}: wrong type", field=key)
    if not isinstance(value, kind):
        raise ModelError(f"{where}: wrong type", field=key)
    return value


def topology_from_dict(doc: Mapping) -> Topology:
    if not isinstance(doc, Mapping):
        raise ModelError("topology document must be a JSON object")
    _check_version(doc.get("version", FORMAT_VERSION))
    raw_nodes = doc.get("nodes")
    raw_circuits = doc.get("circuits", [])
    if not isinstance(raw_nodes, list) or not isinstance(raw_circuits, list):
        raise ModelError("'nodes' and 'circuits' must be lists")
    nodes = []
    for i, rn in enumerate(raw_nodes):
        where = f"nodes[{i}]"
        if not isinstance(rn, Mapping):
            raise ModelError(f"{where}: expected object")
        nodes.append(Node(
            _require(rn, "id", str, where),
            bool(rn.get("dc", False)),
            bool(rn.get("access", False)),
        ))
    circuits = []
    for i, rc in enumerate(raw_circuits):
        where = f"circuits[{i}]"
        if not isinstance(rc, Mapping):
            raise ModelError(f"{where}: expected object")
        metric = _require(rc, "metric", (int, float), where)
        if isinstance(metric, float):
            if not metric.is_integer():
                raise ModelError(f"{where}: metric must be an integer", field="metric")
            metric = int(metric)
        srlgs = rc.get("srlgs", [])
        if not isinstance(srlgs, list) or not all(isinstance(s, str) for s in srlgs):
            raise ModelError(f"{where}: srlgs must be a list of strings", field="srlgs")
        circuits.append(Circuit(
            _require(rc, "id", str, where),
            _require(rc, "a", str, where),
            _require(rc, "b", str, where),
            float(_require(rc, "capacity_mbps", (int, float), where)),
            float(_require(rc, "latency_ms", (int, float), where)),
            metric,
            frozenset(srlgs),
        ))
    return Topology(tuple(nodes), tuple(circuits))


def parse_topology(text: str) -> Topology:
    """Parse and validate a JSON topology document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError(f"malformed JSON: {exc.msg}", line=exc.lineno) from exc
    return topology_from_dict(doc)


def topology_to_dict(topo: Topology) -> dict:
    return {
        "version": FORMAT_VERSION,
        "nodes": [{"id": n.id, "dc": n.is_dc_site, "access": n.is_access_site} for n in topo.nodes],
        "circuits": [
            {
                "id": c.id, "a": c.end_a, "b": c.end_b,
                "capacity_mbps": c.capacity_mbps, "latency_ms": c.latency_ms,
                "metric": c.igp_metric, "srlgs": sorted(c.srlg_ids),
            }
            for c in topo.circuits
        ],
    }


def dump_topology(topo: Topology) -> str:
    return json.dumps(topology_to_dict(topo), indent=2) + "\n"


def parse_demands(text: str, topo: Topology) -> TrafficMatrix:
    """Parse a CSV demand document and resolve endpoints against ``topo``."""
    demands: list[Demand] = []
    seen: set[str] = set()
    reader = csv.reader(io.StringIO(text))
    for lineno, row in enumerate(reader, start=1):
        if not row or all(not cell.strip() for cell in row):
            continue
        first = row[0].strip()
        if first.startswith("#"):
            key, _, value = first[1:].partition(":")
            if key.strip() == "version":
                try:
                    _check_version(int(value.strip()), lineno)
                except ValueError as exc:
                    if isinstance(exc, ModelError):
                        raise
                    raise ModelError("bad version marker", line=lineno, field="version") from exc
            continue
        cells = [c.strip() for c in row]
        if tuple(c.lower() for c in cells) == DEMAND_HEADER:
            continue
        if len(cells) != 4:
            raise ModelError(f"expected 4 fields, got {len(cells)}", line=lineno)
        did, src, dst, mbps = cells
        try:
            bw = float(mbps)
        except ValueError:
            raise ModelError(f"bandwidth {mbps!r} is not a number", line=lineno, field="mbps") from None
        for name, end in (("src", src), ("dst", dst)):
            if end not in topo.node_map:
                raise ModelError(f"unknown node {end!r}", line=lineno, field=name)
        if did in seen:
            raise ModelError(f"duplicate demand id {did!r}", line=lineno, field="id")
        try:
            demands.append(Demand(did, src, dst, bw))
        except ModelError as exc:
            raise ModelError(str(exc), line=lineno) from None
        seen.add(did)
    return TrafficMatrix(tuple(demands))


def dump_demands(matrix: TrafficMatrix) -> str:
    buf = io.StringIO()
    buf.write(f"# version: {FORMAT_VERSION}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(DEMAND_HEADER)
    for d in matrix.demands:
        writer.writerow((d.id, d.src, d.dst, repr(float(d.bandwidth_mbps))))
    return buf.getvalue()
