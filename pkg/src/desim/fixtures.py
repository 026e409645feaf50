"""Synthetic topologies shipped with the package.

Metrics follow the convention metric = round(latency_ms * 10), so IGP
routes are lowest-latency routes.
"""

from __future__ import annotations

from importlib import resources

from .model import Circuit, Demand, Node, Topology, TrafficMatrix, parse_demands, parse_topology

G10 = 10_000.0
G2_5 = 2_500.0

US_SITES = ("atl", "bos", "chi", "hst", "kcy", "lax", "mia", "nyc", "sea", "sjc", "wdc")
US_DCS = ("chi", "kcy", "nyc", "sjc")


def _circuit(a: str, b: str, capacity: float, latency: float, srlgs=()) -> Circuit:
    return Circuit(f"{a}-{b}", a, b, capacity, latency, max(1, round(latency * 10)), frozenset(srlgs))


def asymmetric11() -> Topology:
    """Eleven US sites, four DCs, 10G core with 2.5G spurs and shortcuts."""
    links = [
        ("sea", "sjc", G10, 8.0),
        ("sjc", "lax", G10, 4.0),
        ("sea", "chi", G2_5, 17.0),
        ("sjc", "kcy", G2_5, 14.0),
        ("lax", "hst", G10, 13.0),
        ("kcy", "chi", G10, 5.0),
        ("kcy", "hst", G2_5, 7.0),
        ("hst", "atl", G10, 8.0),
        ("atl", "mia", G10, 6.0),
        ("hst", "mia", G2_5, 10.0),
        ("atl", "wdc", G10, 6.0),
        ("chi", "wdc", G2_5, 7.0),
        ("chi", "nyc", G10, 8.0),
        ("wdc", "nyc", G10, 3.0),
        ("nyc", "bos", G10, 3.0),
        ("chi", "bos", G2_5, 9.0),
        ("kcy", "atl", G2_5, 8.0),
    ]
    nodes = tuple(Node(s, s in US_DCS, True) for s in US_SITES)
    return Topology(nodes, tuple(_circuit(*l) for l in links))


def symmetric5() -> Topology:
    """Four-site ring around a hub; uniform capacity and metrics.

    Every ring pair two hops apart has three equal-cost paths.  The two DCs
    sit unevenly: one on the ring, one at the hub.
    """
    names = ("n1", "n2", "n3", "n4", "hub")
    dcs = ("n1", "hub")
    links = [("n1", "n2"), ("n2", "n3"), ("n3", "n4"), ("n4", "n1"),
             ("hub", "n1"), ("hub", "n2"), ("hub", "n3"), ("hub", "n4")]
    nodes = tuple(Node(n, n in dcs, True) for n in names)
    return Topology(nodes, tuple(_circuit(a, b, G10, 2.0) for a, b in links))


def example11() -> tuple[Topology, TrafficMatrix]:
    """Worked-example network: eleven access sites, four candidate DCs, some existing traffic.

    Built so that with L_max = 25 ms and T = 95% one candidate fails on
    latency, one on utilisation, and the remaining two are feasible with
    different worst-case path utilisation.
    """
    topo = load_topology("example11.json")
    return topo, load_demands("example11_demands.csv", topo)


def load_topology(name: str) -> Topology:
    return parse_topology(resources.files("desim").joinpath("data", name).read_text())


def load_demands(name: str, topo: Topology) -> TrafficMatrix:
    return parse_demands(resources.files("desim").joinpath("data", name).read_text(), topo)


def bottleneck(capacity: float = 1000.0) -> Topology:
    """Two access sites and two DCs whose every access-DC path crosses one circuit."""
    nodes = (Node("s", False, True), Node("core", False, False), Node("x", False, False),
             Node("d1", True, False), Node("d2", True, False))
    links = (
        Circuit("s-core", "s", "core", 100 * capacity, 1.0, 10),
        Circuit("core-x", "core", "x", capacity, 1.0, 10),
        Circuit("x-d1", "x", "d1", 100 * capacity, 1.0, 10),
        Circuit("x-d2", "x", "d2", 100 * capacity, 2.0, 20),
    )
    return Topology(nodes, links)


__all__ = ["asymmetric11", "symmetric5", "example11", "bottleneck", "load_topology", "load_demands",
           "Demand"]
