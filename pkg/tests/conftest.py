import itertools
import random

import pytest

from kgneeds.kg_store import Edge, KnowledgeGraph
from kgneeds.subgraph import SubGraph


def vname(i: int) -> str:
    return f"v{i:02d}"


def graph_from_pairs(n: int, pairs, relation: str = "RelatedTo") -> KnowledgeGraph | None:
    edges = [Edge(vname(a), relation, vname(b), 1.0) for a, b in pairs]
    return KnowledgeGraph(edges) if edges else None


def subgraph_from_pairs(n: int, pairs, relation: str = "RelatedTo") -> SubGraph:
    """Sub-graph on ``v00..v{n-1}`` including isolated vertices."""
    edges = [Edge(vname(a), relation, vname(b), 1.0) for a, b in pairs]
    verts = [vname(i) for i in range(n)]
    return SubGraph.from_parts(verts, edges, {v: "neighbour" for v in verts})


def random_pairs(rng: random.Random, n: int, p: float) -> list[tuple[int, int]]:
    return [(a, b) for a, b in itertools.combinations(range(n), 2) if rng.random() < p]


@pytest.fixture
def chain_graph():
    return KnowledgeGraph([Edge("a", "RelatedTo", "b", 1.0), Edge("b", "RelatedTo", "c", 1.0)])


def pytest_terminal_summary(terminalreporter):
    import sys

    acceptance = sys.modules.get("test_acceptance")
    if acceptance is not None and acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(acceptance.RESULTS, key=lambda l: int(l.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
