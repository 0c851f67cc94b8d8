import random

import networkx as nx
import pytest

from kgneeds.kg_store import Edge, KnowledgeGraph
from kgneeds.subgraph import (
    NEIGHBOUR,
    SEED_NEED,
    SEED_TEXT,
    SHORTEST_PATH,
    EmptySubgraphError,
    SeedSet,
    SubGraph,
    build_subgraph,
    collect_shortest_paths,
    expand_neighbors,
    induce,
)

from conftest import graph_from_pairs, random_pairs, vname


def kg(*pairs, weight=1.0):
    return KnowledgeGraph([Edge(a, "RelatedTo", b, weight) for a, b in pairs])


def test_chain_unique_shortest_path():
    g = kg(("a", "b"), ("b", "c"))
    assert collect_shortest_paths(g, SeedSet(("a",), ("c",))) == [("a", "b", "c")]


def test_diamond_tie_break():
    g = kg(("a", "b"), ("b", "d"), ("a", "c"), ("c", "d"))
    seeds = SeedSet(("a",), ("d",))
    assert collect_shortest_paths(g, seeds, max_paths_per_pair=2) == [("a", "b", "d"), ("a", "c", "d")]
    assert collect_shortest_paths(g, seeds, max_paths_per_pair=1) == [("a", "b", "d")]


def test_disconnected_seeds():
    g = kg(("a", "b"), ("c", "d"))
    assert collect_shortest_paths(g, SeedSet(("a",), ("d",))) == []


def test_max_len_bound():
    g = kg(("a", "b"), ("b", "c"), ("c", "d"))
    assert collect_shortest_paths(g, SeedSet(("a",), ("d",)), max_len=2) == []
    assert collect_shortest_paths(g, SeedSet(("a",), ("d",)), max_len=3) == [("a", "b", "c", "d")]


def test_text_text_pairs_included():
    g = kg(("a", "x"), ("x", "b"))
    assert collect_shortest_paths(g, SeedSet(("b", "a"), ())) == [("a", "x", "b")]


def test_shortest_paths_match_networkx():
    rng = random.Random(7)
    for _ in range(40):
        n = rng.randint(4, 12)
        pairs = random_pairs(rng, n, rng.uniform(0.2, 0.5))
        g = graph_from_pairs(n, pairs)
        if g is None:
            continue
        ref = nx.Graph()
        ref.add_edges_from((vname(a), vname(b)) for a, b in pairs)
        verts = sorted(ref.nodes)
        text = tuple(rng.sample(verts, min(2, len(verts))))
        need = tuple(rng.sample(verts, 1))
        seeds = SeedSet(text, need)
        got = set(collect_shortest_paths(g, seeds, max_len=4, max_paths_per_pair=1000))
        expected = set()
        pairs_to_check = [tuple(sorted(text))] if len(text) == 2 else []
        pairs_to_check += [(t, z) for t in text for z in need if t != z]
        for s, t in pairs_to_check:
            if s == t or not nx.has_path(ref, s, t):
                continue
            if nx.shortest_path_length(ref, s, t) > 4:
                continue
            expected |= {tuple(p) for p in nx.all_shortest_paths(ref, s, t)}
        assert got == expected


def test_expand_one_hop():
    g = kg(("a", "b"), ("b", "c"))
    assert expand_neighbors(g, {"a"}) == {"a", "b"}
    assert expand_neighbors(g, {"a", "b", "c"}) == {"a", "b", "c"}


def test_expand_star_cap():
    leaves = [f"leaf{i:03d}" for i in range(100)]
    # weights: leaf i gets 1 + (i % 10); ties broken by name
    edges = [Edge("hub", "RelatedTo", leaf, 1.0 + (i % 10)) for i, leaf in enumerate(leaves)]
    g = KnowledgeGraph(edges)
    got = expand_neighbors(g, {"hub"}, cap=50)
    ranked = sorted(leaves, key=lambda l: (-(1.0 + leaves.index(l) % 10), l))
    assert got == {"hub"} | set(ranked[:50])
    assert len(got) == 51


def closure_oracle(graph, vertices):
    return sorted(e for e in graph.edges if e.head in vertices and e.tail in vertices)


def test_induce_chain_closure():
    g = kg(("a", "b"), ("b", "c"), ("c", "z"), ("b", "x"), ("q", "r"), ("x", "y"))
    sub = induce(g, SeedSet(("a",), ("z",)))
    # core a,b,c,z plus one-hop neighbour x; y is two hops from the core
    assert set(sub.vertices) == {"a", "b", "c", "z", "x"}
    assert list(sub.edges) == closure_oracle(g, set(sub.vertices))
    assert sub.provenance["a"] == SEED_TEXT
    assert sub.provenance["z"] == SEED_NEED
    assert sub.provenance["b"] == SHORTEST_PATH
    assert sub.provenance["x"] == NEIGHBOUR


def test_induce_isolated_seeds():
    g = kg(("a", "b"), ("c", "d"))
    seeds = SeedSet(("a",), ("d",))
    sub = induce(g, seeds, neighbor_cap=0)
    assert set(sub.vertices) == {"a", "d"}
    assert sub.edges == ()


def test_induce_requires_seeds():
    with pytest.raises(EmptySubgraphError):
        induce(kg(("a", "b")), SeedSet((), ()))


def test_fig3_style_connection():
    g = KnowledgeGraph(
        [
            Edge("win", "RelatedTo", "gold_medal", 1.0),
            Edge("gold_medal", "IsA", "award", 1.0),
            Edge("award", "RelatedTo", "recognition", 1.0),
            Edge("recognition", "RelatedTo", "status", 1.0),
            Edge("medal", "RelatedTo", "gold_medal", 1.0),
        ]
    )
    seeds, sub = build_subgraph(g, ["win", "gold_medal"], ["status", "unknown_need"])
    assert seeds.need_concepts == ("status",)
    assert nx.has_path(nx.Graph([(e.head, e.tail) for e in sub.edges]), "win", "status")


def test_subgraph_json_round_trip():
    g = kg(("a", "b"), ("b", "c"))
    sub = induce(g, SeedSet(("a",), ("c",)))
    again = SubGraph.from_json(sub.to_json())
    assert again.vertices == sub.vertices
    assert again.edges == sub.edges
    assert again.provenance == sub.provenance


def test_all_vertices_reach_a_seed():
    rng = random.Random(3)
    for _ in range(30):
        n = rng.randint(5, 15)
        g = graph_from_pairs(n, random_pairs(rng, n, 0.2))
        if g is None:
            continue
        verts = list(g.vertices)
        seeds = SeedSet((rng.choice(verts),), (rng.choice(verts),))
        sub = induce(g, seeds, max_len=3)
        ref = nx.Graph()
        ref.add_nodes_from(sub.vertices)
        ref.add_edges_from((e.head, e.tail) for e in sub.edges)
        for v in sub.vertices:
            assert any(nx.has_path(ref, v, s) for s in seeds.all)
