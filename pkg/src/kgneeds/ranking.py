"""Vertex centrality, path enumeration and top-k path selection.

Vertices of a sub-graph are scored by closeness centrality, PageRank or
personalized PageRank; a path's score is the mean score of its vertices.
Paths are grouped per endpoint (a need concept for text→need paths, a
concept pair for text→text paths) and the best ``k`` of each group kept.
"""

from __future__ import annotations

import logging
import math
import random
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import sparse

from .kg_store import Edge
from .subgraph import SeedSet, SubGraph

logger = logging.getLogger(__name__)

CZ = "c-z"
CC_PATH = "c-c"

STRATEGIES = ("CC", "PR", "PPR", "CC+PPR", "Random", "None")
_SCORE_KEY = {"CC": "cc", "PR": "pr", "PPR": "ppr", "CC+PPR": "combined"}


class RankingConfigError(ValueError):
    pass


@dataclass(frozen=True)
class VertexScoreMap:
    measure: str
    scores: dict[str, float]

    def __getitem__(self, v: str) -> float:
        return self.scores[v]

    def __contains__(self, v: object) -> bool:
        return v in self.scores

    def __len__(self) -> int:
        return len(self.scores)

    def scaled(self, factor: float) -> "VertexScoreMap":
        return VertexScoreMap(self.measure, {v: s * factor for v, s in self.scores.items()})


# --------------------------------------------------------------------------
# vertex scores


def vscore_cc(sub: SubGraph) -> VertexScoreMap:
    """Closeness centrality with per-component normalization.

    score(v) = |C| / sum of hop distances from v within its component C;
    vertices alone in their component score 0.
    """
    if not len(sub):
        raise ValueError("empty sub-graph")
    scores = {}
    for v in sub.vertices:
        dist = {v: 0}
        queue = deque([v])
        total = 0
        while queue:
            u = queue.popleft()
            for w in sub.neighbors(u):
                if w not in dist:
                    dist[w] = dist[u] + 1
                    total += dist[w]
                    queue.append(w)
        scores[v] = len(dist) / total if total > 0 else 0.0
    return VertexScoreMap("CC", scores)


def _transition(sub: SubGraph) -> tuple[list[str], sparse.csr_matrix]:
    """Column-stochastic random-walk matrix over the undirected view."""
    order = list(sub.vertices)
    index = {v: i for i, v in enumerate(order)}
    rows, cols, vals = [], [], []
    for v in order:
        nbrs = sub.neighbors(v)
        if not nbrs:
            continue
        share = 1.0 / len(nbrs)
        j = index[v]
        for w in nbrs:
            rows.append(index[w])
            cols.append(j)
            vals.append(share)
    n = len(order)
    return order, sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))


def _power_iteration(
    matrix: sparse.csr_matrix, teleport: np.ndarray, alpha: float, max_iter: int, tol: float
) -> tuple[np.ndarray, int]:
    r = teleport.copy()
    for it in range(1, max_iter + 1):
        nxt = alpha * (matrix @ r) + (1.0 - alpha) * teleport
        # isolated vertices leak mass; put it back proportionally
        nxt /= nxt.sum()
        delta = np.abs(nxt - r).sum()
        r = nxt
        if delta < tol:
            return r, it
    logger.debug("power iteration stopped at %d steps (L1 change %.2e)", max_iter, delta)
    return r, max_iter


def vscore_ppr(
    sub: SubGraph,
    alpha: float = 0.85,
    topic: Iterable[str] | None = None,
    max_iter: int = 1000,
    tol: float = 1e-10,
) -> VertexScoreMap:
    """Personalized PageRank: teleport mass spread uniformly over ``topic``.

    ``topic=None`` teleports uniformly to every vertex (plain PageRank).
    """
    if not 0.0 < alpha < 1.0:
        raise RankingConfigError("alpha must lie in (0, 1)")
    order, matrix = _transition(sub)
    n = len(order)
    if n == 0:
        raise ValueError("empty sub-graph")
    if topic is None:
        teleport = np.full(n, 1.0 / n)
        measure = "PR"
    else:
        members = set(topic)
        unknown = members - set(order)
        if unknown:
            raise ValueError(f"topic vertices not in sub-graph: {sorted(unknown)}")
        if not members:
            raise ValueError("empty topic set")
        teleport = np.array([1.0 / len(members) if v in members else 0.0 for v in order])
        measure = "PPR"
    r, _ = _power_iteration(matrix, teleport, alpha, max_iter, tol)
    return VertexScoreMap(measure, {v: float(x) for v, x in zip(order, r)})


def vscore_pr(sub: SubGraph, alpha: float = 0.85, max_iter: int = 1000, tol: float = 1e-10) -> VertexScoreMap:
    return vscore_ppr(sub, alpha, None, max_iter, tol)


# --------------------------------------------------------------------------
# paths


@dataclass(frozen=True)
class KnowledgePath:
    concepts: tuple[str, ...]
    relations: tuple[tuple[str, str], ...]  # (relation, "+" | "-") per hop
    path_type: str
    endpoint: str | tuple[str, str]
    scores: Mapping[str, float] = field(default_factory=dict, compare=False)

    @property
    def hops(self) -> int:
        return len(self.concepts) - 1

    def sort_key(self) -> tuple:
        return (self.hops, self.concepts)

    def relation_marks(self) -> list[str]:
        return [f"{d}{r}" for r, d in self.relations]

    def to_json(self) -> dict:
        out = {"concepts": list(self.concepts), "relations": self.relation_marks()}
        for key in ("cc", "pr", "ppr", "combined"):
            if key in self.scores:
                out[f"pscore_{key}"] = self.scores[key]
        return out

    @classmethod
    def from_json(cls, obj: dict, path_type: str, endpoint) -> "KnowledgePath":
        rels = tuple((m[1:], m[0]) for m in obj["relations"])
        scores = {k[len("pscore_"):]: v for k, v in obj.items() if k.startswith("pscore_")}
        if isinstance(endpoint, list):
            endpoint = tuple(endpoint)
        return cls(tuple(obj["concepts"]), rels, path_type, endpoint, scores)


def _canonical_edge(edges: Sequence[Edge], a: str) -> tuple[str, str]:
    """Pick one relation for a hop leaving ``a``: heaviest, then by name, forward first."""
    best = min(edges, key=lambda e: (-e.weight, e.relation, 0 if e.head == a else 1))
    return best.relation, "+" if best.head == a else "-"


def _hop_distance_to(sub: SubGraph, targets: Iterable[str]) -> dict[str, int]:
    dist = {t: 0 for t in targets if t in sub}
    queue = deque(dist)
    while queue:
        u = queue.popleft()
        for w in sub.neighbors(u):
            if w not in dist:
                dist[w] = dist[u] + 1
                queue.append(w)
    return dist


def enumerate_paths(
    sub: SubGraph,
    seeds: SeedSet,
    max_hops: int = 4,
    cap: int | None = None,
    path_types: Sequence[str] = (CZ, CC_PATH),
) -> list[KnowledgePath]:
    """Simple undirected paths of 1..``max_hops`` hops from text concepts.

    Text→need paths end in a need concept; text→text paths run from the
    lexicographically smaller concept of a pair to the larger one. Sources
    are visited in sorted order and neighbours expanded lexicographically;
    each endpoint keeps at most ``cap`` paths in that order.
    """
    if max_hops < 1:
        raise ValueError("max_hops must be >= 1")
    text = sorted(c for c in set(seeds.text_concepts) if c in sub)
    needs = set(c for c in seeds.need_concepts if c in sub) if CZ in path_types else set()
    text_set = set(text) if CC_PATH in path_types else set()
    goal_dist = _hop_distance_to(sub, needs | text_set)
    edge_index = sub.edge_index()
    counts: dict[tuple[str, object], int] = {}
    out: list[KnowledgePath] = []

    def emit(path: list[str], kind: str, endpoint):
        key = (kind, endpoint)
        if cap is not None and counts.get(key, 0) >= cap:
            return
        counts[key] = counts.get(key, 0) + 1
        rels = tuple(
            _canonical_edge(edge_index[frozenset((a, b))], a) for a, b in zip(path, path[1:])
        )
        out.append(KnowledgePath(tuple(path), rels, kind, endpoint))

    for source in text:
        path = [source]
        on_path = {source}

        def dfs(u: str):
            if len(path) > 1:
                if u in needs and u != source:
                    emit(path, CZ, u)
                if u in text_set and u > source:
                    emit(path, CC_PATH, (source, u))
            remaining = max_hops - (len(path) - 1)
            if remaining == 0:
                return
            for w in sub.neighbors(u):
                if w in on_path or goal_dist.get(w, math.inf) > remaining - 1:
                    continue
                path.append(w)
                on_path.add(w)
                dfs(w)
                on_path.discard(w)
                path.pop()

        dfs(source)
    return out


def pscore(path: KnowledgePath | Sequence[str], vscores: VertexScoreMap | Mapping[str, float]) -> float:
    """Mean vertex score along a path (exactly rounded, so order-independent)."""
    concepts = path.concepts if isinstance(path, KnowledgePath) else tuple(path)
    try:
        values = [vscores[c] for c in concepts]
    except KeyError as exc:
        raise KeyError(f"no vertex score for {exc.args[0]!r}") from None
    mean = math.fsum(values) / len(values)
    # the final division can round one ulp outside the value range
    return min(max(mean, min(values)), max(values))


# --------------------------------------------------------------------------
# selection


@dataclass(frozen=True)
class RankingConfig:
    strategy: str = "CC+PPR"
    alpha: float = 0.85
    k: int = 3
    max_hops: int = 4
    enumeration_cap: int | None = 1000
    seed: int = 0
    max_iter: int = 1000
    tol: float = 1e-10

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise RankingConfigError(f"unknown strategy {self.strategy!r}; choose from {STRATEGIES}")
        if not 0.0 < self.alpha < 1.0:
            raise RankingConfigError("alpha must lie in (0, 1)")
        if self.k < 1:
            raise RankingConfigError("k must be >= 1")
        if self.max_hops < 1:
            raise RankingConfigError("max_hops must be >= 1")


@dataclass
class RankedPathList:
    instance_id: str
    entries: dict[tuple[str, object], list[KnowledgePath]]

    def flat(self) -> list[KnowledgePath]:
        return [p for paths in self.entries.values() for p in paths]

    def to_records(self) -> list[dict]:
        return [
            {
                "instance_id": self.instance_id,
                "path_type": kind,
                "endpoint": list(endpoint) if isinstance(endpoint, tuple) else endpoint,
                "paths": [p.to_json() for p in paths],
            }
            for (kind, endpoint), paths in self.entries.items()
        ]


def _minmax(values: list[float]) -> list[float]:
    lo, hi = min(values), max(values)
    if hi == lo:
        return [0.5] * len(values)
    return [(v - lo) / (hi - lo) for v in values]


def score_paths(
    paths: Sequence[KnowledgePath],
    sub: SubGraph,
    seeds: SeedSet,
    alpha: float = 0.85,
    max_iter: int = 1000,
    tol: float = 1e-10,
) -> list[KnowledgePath]:
    """Attach CC, PR, PPR and combined Pscores to every path.

    The combined score is the mean of the CC and PPR Pscores after min-max
    normalization within each endpoint group.
    """
    if not paths:
        return []
    cc = vscore_cc(sub)
    pr = vscore_pr(sub, alpha, max_iter, tol)
    topic = [v for v in seeds.all if v in sub]
    ppr = vscore_ppr(sub, alpha, topic, max_iter, tol)
    base = [
        {"cc": pscore(p, cc), "pr": pscore(p, pr), "ppr": pscore(p, ppr)} for p in paths
    ]
    groups: dict[tuple, list[int]] = {}
    for i, p in enumerate(paths):
        groups.setdefault((p.path_type, p.endpoint), []).append(i)
    for idx in groups.values():
        ncc = _minmax([base[i]["cc"] for i in idx])
        nppr = _minmax([base[i]["ppr"] for i in idx])
        for i, a, b in zip(idx, ncc, nppr):
            base[i]["combined"] = (a + b) / 2.0
    return [replace(p, scores=s) for p, s in zip(paths, base)]


def _endpoint_order(key: tuple[str, object], needs: Sequence[str]) -> tuple:
    kind, endpoint = key
    if kind == CZ:
        pos = needs.index(endpoint) if endpoint in needs else len(needs)
        return (0, pos, str(endpoint))
    return (1, 0, tuple(endpoint))


def rank_and_select(
    paths: Sequence[KnowledgePath],
    sub: SubGraph,
    config: RankingConfig,
    seeds: SeedSet,
    instance_id: str = "",
) -> RankedPathList:
    """Group paths by endpoint and keep the top ``k`` under ``config.strategy``.

    Ranked strategies sort by Pscore descending, then fewer hops, then
    concept sequence. ``Random`` samples ``k`` per endpoint with a generator
    seeded from (seed, instance, endpoint); ``None`` keeps everything.
    """
    if config.k < 1:
        raise RankingConfigError("k must be >= 1")
    if paths and not all(p.scores for p in paths):
        paths = score_paths(paths, sub, seeds, config.alpha, config.max_iter, config.tol)
    groups: dict[tuple[str, object], list[KnowledgePath]] = {}
    for p in paths:
        groups.setdefault((p.path_type, p.endpoint), []).append(p)
    selected: dict[tuple[str, object], list[KnowledgePath]] = {}
    for key in sorted(groups, key=lambda k: _endpoint_order(k, list(seeds.need_concepts))):
        cands = groups[key]
        if config.strategy == "None":
            chosen = list(cands)
        elif config.strategy == "Random":
            pool = sorted(cands, key=KnowledgePath.sort_key)
            endpoint = "|".join(key[1]) if isinstance(key[1], tuple) else key[1]
            rng = random.Random(f"{config.seed}|{instance_id}|{key[0]}|{endpoint}")
            chosen = rng.sample(pool, min(config.k, len(pool)))
        else:
            field_name = _SCORE_KEY[config.strategy]
            chosen = sorted(cands, key=lambda p: (-p.scores[field_name],) + p.sort_key())[: config.k]
        selected[key] = chosen
    return RankedPathList(instance_id, selected)
