"""Per-instance sub-graph induction.

The sub-graph joins concepts found in the text with human-need concepts:
shortest connecting paths are collected, their vertices are expanded by one
hop, and every parent edge between retained vertices is kept.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .kg_store import Edge, KnowledgeGraph

SEED_TEXT = "seed-text"
SEED_NEED = "seed-need"
SHORTEST_PATH = "shortest-path"
NEIGHBOUR = "neighbour"


class EmptySubgraphError(ValueError):
    pass


@dataclass(frozen=True)
class SeedSet:
    text_concepts: tuple[str, ...]
    need_concepts: tuple[str, ...]

    @classmethod
    def build(cls, graph: KnowledgeGraph, text: Iterable[str], needs: Iterable[str]) -> "SeedSet":
        """Keep graph members only, deduplicated in input order."""
        t = tuple(dict.fromkeys(c for c in text if graph.contains(c)))
        z = tuple(dict.fromkeys(c for c in needs if graph.contains(c)))
        return cls(t, z)

    @property
    def all(self) -> tuple[str, ...]:
        return tuple(dict.fromkeys(self.text_concepts + self.need_concepts))

    def __bool__(self) -> bool:
        return bool(self.text_concepts or self.need_concepts)


@dataclass
class SubGraph:
    vertices: tuple[str, ...]
    edges: tuple[Edge, ...]
    provenance: dict[str, str]
    adjacency: dict[str, tuple[str, ...]] = field(repr=False)

    @classmethod
    def from_parts(cls, vertices: Iterable[str], edges: Iterable[Edge], provenance: dict[str, str]):
        verts = tuple(sorted(set(vertices)))
        edges = tuple(sorted(edges))
        adj: dict[str, set[str]] = {v: set() for v in verts}
        for e in edges:
            adj[e.head].add(e.tail)
            adj[e.tail].add(e.head)
        adjacency = {v: tuple(sorted(ns)) for v, ns in adj.items()}
        return cls(verts, edges, {v: provenance[v] for v in verts}, adjacency)

    @classmethod
    def from_graph(cls, graph: KnowledgeGraph, provenance: dict[str, str] | None = None) -> "SubGraph":
        """Treat a whole (small) graph as a sub-graph; handy for fixtures."""
        prov = provenance or {}
        return cls.from_parts(graph.vertices, graph.edges, {v: prov.get(v, NEIGHBOUR) for v in graph.vertices})

    def __len__(self) -> int:
        return len(self.vertices)

    def __contains__(self, v: object) -> bool:
        return v in self.adjacency

    def neighbors(self, v: str) -> tuple[str, ...]:
        return self.adjacency.get(v, ())

    def edges_between(self, a: str, b: str) -> list[Edge]:
        return [e for e in self.edges if (e.head, e.tail) in ((a, b), (b, a))]

    def edge_index(self) -> dict[frozenset, list[Edge]]:
        idx: dict[frozenset, list[Edge]] = {}
        for e in self.edges:
            idx.setdefault(frozenset((e.head, e.tail)), []).append(e)
        return idx

    def to_json(self) -> dict:
        return {
            "vertices": [{"id": v, "provenance": self.provenance[v]} for v in self.vertices],
            "edges": [
                {"head": e.head, "relation": e.relation, "tail": e.tail, "weight": e.weight} for e in self.edges
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SubGraph":
        prov = {v["id"]: v["provenance"] for v in obj["vertices"]}
        edges = [Edge(e["head"], e["relation"], e["tail"], float(e["weight"])) for e in obj["edges"]]
        return cls.from_parts(prov, edges, prov)


def _bfs_levels(graph: KnowledgeGraph, source: str, targets: set[str], max_len: int) -> dict[str, int]:
    """Hop distances from ``source`` up to ``max_len``; stops after the level
    on which the last target is reached."""
    dist = {source: 0}
    frontier = [source]
    remaining = set(targets) - {source}
    depth = 0
    while frontier and depth < max_len and remaining:
        depth += 1
        nxt = []
        for u in frontier:
            for w in graph.neighbor_ids(u):
                if w not in dist:
                    dist[w] = depth
                    nxt.append(w)
        remaining -= set(nxt)
        frontier = nxt
    return dist


def _shortest_paths_to(
    graph: KnowledgeGraph, source: str, target: str, dist: dict[str, int], limit: int
) -> list[tuple[str, ...]]:
    """All shortest source→target paths in lexicographic order, at most ``limit``."""
    d = dist.get(target)
    if d is None or d == 0:
        return []
    # vertices lying on some shortest path: walk predecessors back from target
    on_path = {target}
    layer = {target}
    for level in range(d - 1, -1, -1):
        prev = set()
        for v in layer:
            for u in graph.neighbor_ids(v):
                if dist.get(u) == level:
                    prev.add(u)
        on_path |= prev
        layer = prev
    out: list[tuple[str, ...]] = []

    def walk(path: list[str]):
        if len(out) >= limit:
            return
        u = path[-1]
        if u == target:
            out.append(tuple(path))
            return
        level = dist[u] + 1
        for w in sorted(graph.neighbor_ids(u)):
            if w in on_path and dist.get(w) == level:
                path.append(w)
                walk(path)
                path.pop()
                if len(out) >= limit:
                    return

    walk([source])
    return out


def _seed_pairs(seeds: SeedSet) -> list[tuple[str, str]]:
    pairs: dict[tuple[str, str], None] = {}
    text = seeds.text_concepts
    for i, a in enumerate(text):
        for b in text[i + 1:]:
            if a != b:
                pairs.setdefault(tuple(sorted((a, b))), None)
    for a in text:
        for z in seeds.need_concepts:
            if a != z:
                pairs.setdefault((a, z), None)
    return list(pairs)


def collect_shortest_paths(
    graph: KnowledgeGraph, seeds: SeedSet, max_len: int = 4, max_paths_per_pair: int = 10
) -> list[tuple[str, ...]]:
    """Shortest undirected paths for text–text and text–need seed pairs.

    Text–text pairs are oriented from the lexicographically smaller concept.
    Each pair contributes its first ``max_paths_per_pair`` paths in
    lexicographic order; pairs farther apart than ``max_len`` contribute none.
    """
    if max_len < 1 or max_paths_per_pair < 1:
        raise ValueError("max_len and max_paths_per_pair must be >= 1")
    by_source: dict[str, list[str]] = {}
    for a, b in _seed_pairs(seeds):
        by_source.setdefault(a, []).append(b)
    found: dict[tuple[str, ...], None] = {}
    for source, targets in by_source.items():
        dist = _bfs_levels(graph, source, set(targets), max_len)
        for t in targets:
            for p in _shortest_paths_to(graph, source, t, dist, max_paths_per_pair):
                found.setdefault(p, None)
    return sorted(found)


def expand_neighbors(graph: KnowledgeGraph, core: Iterable[str], cap: int | None = None) -> set[str]:
    """``core`` plus its one-hop neighbours.

    With ``cap``, each core vertex contributes at most ``cap`` neighbours,
    chosen by strongest connecting edge weight (ties: concept name).
    """
    core = set(core)
    out = set(core)
    for v in sorted(core):
        strength: dict[str, float] = {}
        for e, other, _ in graph.incident(v):
            if e.weight > strength.get(other, -1.0):
                strength[other] = e.weight
        ranked = sorted(strength, key=lambda c: (-strength[c], c))
        if cap is not None:
            ranked = ranked[:cap]
        out.update(ranked)
    return out


def induce(
    graph: KnowledgeGraph,
    seeds: SeedSet,
    max_len: int = 4,
    max_paths_per_pair: int = 10,
    neighbor_cap: int | None = None,
) -> SubGraph:
    if not seeds:
        raise EmptySubgraphError("no seed concepts present in the graph")
    provenance: dict[str, str] = {}
    for c in seeds.need_concepts:
        provenance[c] = SEED_NEED
    for c in seeds.text_concepts:
        provenance[c] = SEED_TEXT
    for path in collect_shortest_paths(graph, seeds, max_len, max_paths_per_pair):
        for v in path:
            provenance.setdefault(v, SHORTEST_PATH)
    for v in expand_neighbors(graph, list(provenance), neighbor_cap):
        provenance.setdefault(v, NEIGHBOUR)

    members = set(provenance)
    edges = [e for v in sorted(members) for e in graph.out_edges(v) if e.tail in members]

    # drop vertices with no undirected connection to a seed
    adj: dict[str, set[str]] = {v: set() for v in members}
    for e in edges:
        adj[e.head].add(e.tail)
        adj[e.tail].add(e.head)
    reached = set(seeds.all)
    queue = deque(seeds.all)
    while queue:
        u = queue.popleft()
        for w in adj[u]:
            if w not in reached:
                reached.add(w)
                queue.append(w)
    edges = [e for e in edges if e.head in reached and e.tail in reached]
    return SubGraph.from_parts(reached, edges, provenance)


def build_subgraph(
    graph: KnowledgeGraph,
    text_concepts: Sequence[str],
    need_concepts: Sequence[str],
    **kwargs,
) -> tuple[SeedSet, SubGraph]:
    seeds = SeedSet.build(graph, text_concepts, need_concepts)
    return seeds, induce(graph, seeds, **kwargs)
