import pytest

from desim.model import Circuit, Node, Topology


def make_topology(nodes, circuits, dc=(), access=()):
    """circuits: iterable of (id, a, b, capacity, latency, metric[, srlgs])."""
    ns = tuple(Node(n, n in dc, n in access) for n in nodes)
    cs = tuple(
        Circuit(c[0], c[1], c[2], float(c[3]), float(c[4]), int(c[5]), frozenset(c[6] if len(c) > 6 else ()))
        for c in circuits
    )
    return Topology(ns, cs)


@pytest.fixture
def triangle():
    return make_topology(
        ["a", "b", "c"],
        [("ab", "a", "b", 1000, 1, 10), ("ac", "a", "c", 1000, 1, 10), ("bc", "b", "c", 1000, 1, 10)],
        dc=("b", "c"),
        access=("a", "b", "c"),
    )


@pytest.fixture
def square():
    return make_topology(
        ["a", "b", "c", "d"],
        [("ab", "a", "b", 1000, 1, 10), ("bd", "b", "d", 1000, 1, 10),
         ("ac", "a", "c", 1000, 2, 10), ("cd", "c", "d", 1000, 2, 10)],
        dc=("b", "c"),
        access=("a", "d"),
    )


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
