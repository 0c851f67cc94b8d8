import json
import math
import random

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kgneeds.kg_store import Edge
from kgneeds.ranking import (
    CC_PATH,
    CZ,
    KnowledgePath,
    RankingConfig,
    RankingConfigError,
    enumerate_paths,
    pscore,
    rank_and_select,
    score_paths,
    vscore_cc,
    vscore_ppr,
    vscore_pr,
)
from kgneeds.subgraph import SeedSet, SubGraph

from conftest import random_pairs, subgraph_from_pairs, vname
from oracles import closeness_oracle, enumerate_oracle, pagerank_oracle


def chain(*names):
    edges = [Edge(a, "RelatedTo", b, 1.0) for a, b in zip(names, names[1:])]
    return SubGraph.from_parts(names, edges, {v: "neighbour" for v in names})


def complete(n):
    return subgraph_from_pairs(n, [(a, b) for a in range(n) for b in range(a + 1, n)])


# ---------------------------------------------------------------- closeness


def test_cc_chain_by_hand():
    s = vscore_cc(chain("a", "b", "c"))
    assert s["b"] == 1.5
    assert s["a"] == 1.0
    assert s["c"] == 1.0


def test_cc_complete_graph():
    s = vscore_cc(complete(4))
    assert all(math.isclose(x, 4 / 3) for x in s.scores.values())


def test_cc_singleton_component_is_zero():
    s = vscore_cc(subgraph_from_pairs(3, [(0, 1)]))
    assert s[vname(2)] == 0.0
    assert s[vname(0)] == 2.0


def test_cc_matches_floyd_warshall():
    rng = random.Random(11)
    for _ in range(25):
        n = rng.randint(2, 30)
        sub = subgraph_from_pairs(n, random_pairs(rng, n, rng.uniform(0.05, 0.4)))
        assert vscore_cc(sub).scores == closeness_oracle(sub)


def test_cc_matches_networkx_on_connected_graphs():
    rng = random.Random(5)
    for _ in range(20):
        n = rng.randint(3, 25)
        pairs = random_pairs(rng, n, 0.4)
        ref = nx.Graph()
        ref.add_nodes_from(vname(i) for i in range(n))
        ref.add_edges_from((vname(a), vname(b)) for a, b in pairs)
        if not nx.is_connected(ref):
            continue
        # networkx closeness is (n-1)/sum; ours is n/sum
        expected = {v: c * n / (n - 1) for v, c in nx.closeness_centrality(ref).items()}
        got = vscore_cc(subgraph_from_pairs(n, pairs)).scores
        for v in expected:
            assert math.isclose(got[v], expected[v], rel_tol=1e-12)


# ---------------------------------------------------------------- pagerank


@pytest.mark.parametrize("alpha", [0.5, 0.85, 0.99])
def test_pr_complete_k3(alpha):
    s = vscore_pr(complete(3), alpha=alpha)
    assert all(abs(x - 1 / 3) < 1e-12 for x in s.scores.values())


def test_pr_sums_to_one_with_isolated_vertices():
    sub = subgraph_from_pairs(6, [(0, 1), (1, 2)])
    assert abs(sum(vscore_pr(sub).scores.values()) - 1.0) < 1e-8


def test_ppr_topic_everything_equals_pr():
    rng = random.Random(2)
    for _ in range(10):
        n = rng.randint(2, 20)
        sub = subgraph_from_pairs(n, random_pairs(rng, n, 0.3))
        pr = vscore_pr(sub).scores
        ppr = vscore_ppr(sub, topic=sub.vertices).scores
        assert max(abs(pr[v] - ppr[v]) for v in pr) <= 1e-8


def test_ppr_two_chain_ordering():
    sub = chain("a", "b")
    s = vscore_ppr(sub, alpha=0.85, topic=["a"])
    assert s["a"] > s["b"]
    # stationary solution of r_a = .85 r_b + .15, r_b = .85 r_a
    assert math.isclose(s["a"], 0.15 / (1 - 0.85**2), rel_tol=1e-8)


def test_pr_ppr_match_dense_oracle():
    rng = random.Random(13)
    for _ in range(20):
        n = rng.randint(2, 40)
        sub = subgraph_from_pairs(n, random_pairs(rng, n, rng.uniform(0.1, 0.5)))
        topic = rng.sample(list(sub.vertices), rng.randint(1, n))
        for got, ref in (
            (vscore_pr(sub).scores, pagerank_oracle(sub)),
            (vscore_ppr(sub, topic=topic).scores, pagerank_oracle(sub, topic=topic)),
        ):
            assert max(abs(got[v] - ref[v]) for v in ref) <= 1e-6


def test_pr_matches_networkx_without_isolates():
    rng = random.Random(17)
    checked = 0
    while checked < 10:
        n = rng.randint(3, 25)
        pairs = random_pairs(rng, n, 0.35)
        ref = nx.Graph()
        ref.add_nodes_from(vname(i) for i in range(n))
        ref.add_edges_from((vname(a), vname(b)) for a, b in pairs)
        if any(d == 0 for _, d in ref.degree()):
            continue
        checked += 1
        topic = {vname(0): 1.0, vname(1): 1.0}
        expected = nx.pagerank(ref, alpha=0.85, personalization=topic, tol=1e-13, max_iter=10000)
        got = vscore_ppr(subgraph_from_pairs(n, pairs), topic=list(topic)).scores
        assert max(abs(got[v] - expected[v]) for v in expected) <= 1e-8


def test_ppr_rejects_bad_topic():
    with pytest.raises(ValueError):
        vscore_ppr(chain("a", "b"), topic=["zzz"])
    with pytest.raises(RankingConfigError):
        vscore_ppr(chain("a", "b"), alpha=1.0)


# ---------------------------------------------------------------- enumeration


def as_set(paths):
    return {(p.concepts, p.path_type, p.endpoint) for p in paths}


def test_enumerate_chain():
    sub = chain("a", "b", "z")
    seeds = SeedSet(("a",), ("z",))
    paths = enumerate_paths(sub, seeds)
    assert as_set(paths) == {(("a", "b", "z"), CZ, "z")}
    assert enumerate_paths(sub, seeds, max_hops=1) == []


def test_enumerate_two_routes():
    edges = [Edge(a, "RelatedTo", b, 1.0) for a, b in [("a", "b"), ("b", "z"), ("a", "c"), ("c", "z")]]
    sub = SubGraph.from_parts("abcz", edges, {v: "neighbour" for v in "abcz"})
    seeds = SeedSet(("a",), ("z",))
    got = as_set(enumerate_paths(sub, seeds))
    assert got == {(("a", "b", "z"), CZ, "z"), (("a", "c", "z"), CZ, "z")}
    assert got == enumerate_oracle(sub, seeds, 4)


def test_enumerate_text_text_orientation():
    sub = chain("b", "x", "a")
    paths = enumerate_paths(sub, SeedSet(("b", "a"), ()))
    assert as_set(paths) == {(("a", "x", "b"), CC_PATH, ("a", "b"))}


def test_enumerate_matches_oracle_random():
    rng = random.Random(23)
    for _ in range(60):
        n = rng.randint(2, 10)
        sub = subgraph_from_pairs(n, random_pairs(rng, n, rng.uniform(0.2, 0.6)))
        verts = list(sub.vertices)
        seeds = SeedSet(tuple(rng.sample(verts, rng.randint(1, min(3, n)))), tuple(rng.sample(verts, 1)))
        hops = rng.randint(1, 4)
        assert as_set(enumerate_paths(sub, seeds, hops)) == enumerate_oracle(sub, seeds, hops)


def test_enumerate_cap_per_endpoint():
    sub = complete(6)
    seeds = SeedSet((vname(0),), (vname(5), vname(4)))
    capped = enumerate_paths(sub, seeds, 4, cap=2, path_types=(CZ,))
    counts = {}
    for p in capped:
        counts[p.endpoint] = counts.get(p.endpoint, 0) + 1
    assert counts == {vname(5): 2, vname(4): 2}


def test_canonical_relation_per_hop():
    edges = [
        Edge("a", "IsA", "b", 1.0),
        Edge("b", "Causes", "a", 2.0),
        Edge("b", "AtLocation", "z", 1.0),
        Edge("b", "UsedFor", "z", 1.0),
    ]
    sub = SubGraph.from_parts("abz", edges, {v: "neighbour" for v in "abz"})
    (p,) = enumerate_paths(sub, SeedSet(("a",), ("z",)))
    assert p.relations == (("Causes", "-"), ("AtLocation", "+"))
    assert p.relation_marks() == ["-Causes", "+AtLocation"]


# ---------------------------------------------------------------- pscore


def test_pscore_examples():
    assert math.isclose(pscore(["a", "b"], {"a": 0.2, "b": 0.4}), 0.3)
    assert pscore(["a"], {"a": 0.7}) == 0.7
    with pytest.raises(KeyError):
        pscore(["a", "q"], {"a": 0.2})


def test_pscore_fig3_style():
    vs = {"win": 0.31, "gold_medal": 0.45, "award": 0.27, "status": 0.52}
    assert pscore(["win", "gold_medal", "award", "status"], vs) == math.fsum(vs.values()) / 4


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(min_value=0, max_value=10, allow_nan=False), min_size=1, max_size=6), st.randoms())
def test_pscore_order_independent(values, rnd):
    names = [f"c{i}" for i in range(len(values))]
    vs = dict(zip(names, values))
    shuffled = names[:]
    rnd.shuffle(shuffled)
    assert pscore(names, vs) == pscore(shuffled, vs)
    assert min(values) <= pscore(names, vs) <= max(values)


# ---------------------------------------------------------------- selection


def scored(concepts, **scores):
    rels = tuple(("RelatedTo", "+") for _ in concepts[1:])
    return KnowledgePath(tuple(concepts), rels, CZ, concepts[-1], scores)


def test_rank_cc_top_k():
    paths = [scored(["a", "x", "z"], cc=0.5), scored(["a", "y", "z"], cc=0.9), scored(["a", "w", "z"], cc=0.1)]
    sub = chain("a", "z")
    out = rank_and_select(paths, sub, RankingConfig(strategy="CC", k=2), SeedSet(("a",), ("z",)))
    assert [p.concepts for p in out.flat()] == [("a", "y", "z"), ("a", "x", "z")]


def test_rank_tie_prefers_fewer_hops():
    paths = [scored(["a", "x", "y", "z"], combined=0.5), scored(["a", "x", "z"], combined=0.5)]
    out = rank_and_select(paths, chain("a", "z"), RankingConfig(k=2), SeedSet(("a",), ("z",)))
    assert [p.hops for p in out.flat()] == [2, 3]


def test_combined_score_hand_fixture():
    # four a->z routes through distinct middles; CC and PPR orders disagree
    edges = [Edge(a, "RelatedTo", b, 1.0) for a, b in [
        ("a", "m1"), ("m1", "z"), ("a", "m2"), ("m2", "z"), ("m2", "x"),
        ("a", "m3"), ("m3", "z"), ("m3", "y1"), ("y1", "y2"), ("a", "m4"), ("m4", "z"),
        ("m4", "q1"), ("m4", "q2"), ("m4", "q3"),
    ]]
    verts = sorted({v for e in edges for v in (e.head, e.tail)})
    sub = SubGraph.from_parts(verts, edges, {v: "neighbour" for v in verts})
    seeds = SeedSet(("a",), ("z",))
    paths = enumerate_paths(sub, seeds, max_hops=2)
    assert len(paths) == 4
    cc = closeness_oracle(sub)
    ppr = pagerank_oracle(sub, topic=["a", "z"])
    raw_cc = [sum(cc[c] for c in p.concepts) / 3 for p in paths]
    raw_ppr = [sum(ppr[c] for c in p.concepts) / 3 for p in paths]
    assert np.argsort(raw_cc).tolist() != np.argsort(raw_ppr).tolist()

    def norm(xs):
        return [(x - min(xs)) / (max(xs) - min(xs)) for x in xs]

    expected = [(a + b) / 2 for a, b in zip(norm(raw_cc), norm(raw_ppr))]
    got = [p.scores["combined"] for p in score_paths(paths, sub, seeds)]
    assert np.allclose(got, expected, atol=1e-6)
    ranked = rank_and_select(paths, sub, RankingConfig(k=4), seeds).flat()
    order = sorted(range(4), key=lambda i: (-expected[i], paths[i].concepts))
    assert [p.concepts for p in ranked] == [paths[i].concepts for i in order]


def test_combined_constant_group_is_half():
    sub = chain("a", "b", "z")
    seeds = SeedSet(("a",), ("z",))
    (p,) = score_paths(enumerate_paths(sub, seeds), sub, seeds)
    assert p.scores["combined"] == 0.5


def test_strategies_none_random_ranked():
    sub = complete(7)
    seeds = SeedSet((vname(0), vname(1)), (vname(6),))
    paths = enumerate_paths(sub, seeds, 3)
    n_cz = sum(p.path_type == CZ for p in paths)
    none = rank_and_select(paths, sub, RankingConfig(strategy="None"), seeds)
    assert len(none.flat()) == len(paths)
    for strategy in ("CC", "PR", "PPR", "CC+PPR", "Random"):
        out = rank_and_select(paths, sub, RankingConfig(strategy=strategy, k=3), seeds, "inst")
        assert all(len(v) <= 3 for v in out.entries.values())
        assert sum(len(v) for k, v in out.entries.items() if k[0] == CZ) == min(3, n_cz)
    r1 = rank_and_select(paths, sub, RankingConfig(strategy="Random", seed=1), seeds, "inst")
    r2 = rank_and_select(paths, sub, RankingConfig(strategy="Random", seed=1), seeds, "inst")
    assert json.dumps(r1.to_records()) == json.dumps(r2.to_records())


def test_ranking_config_validation():
    with pytest.raises(RankingConfigError):
        RankingConfig(strategy="Best")
    with pytest.raises(RankingConfigError):
        RankingConfig(k=0)


def test_path_json_round_trip():
    p = scored(["a", "b", "z"], cc=0.1, ppr=0.2)
    q = KnowledgePath.from_json(json.loads(json.dumps(p.to_json())), CZ, "z")
    assert q == p
    assert q.scores == {"cc": 0.1, "ppr": 0.2}
