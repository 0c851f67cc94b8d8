"""In-memory commonsense knowledge graph built from ConceptNet-style dumps.

Two input formats are understood:

* the ConceptNet 5.x assertion dump (tab separated: assertion URI, relation
  URI, start URI, end URI, JSON metadata with a ``weight`` key), optionally
  gzip-compressed;
* a simplified CSV with ``relation,head,tail,weight`` rows (header optional).

Edges are stored as directed triples; lookups expose both directions.
"""

from __future__ import annotations

import csv
import gzip
import io
import json
import logging
import pickle
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

logger = logging.getLogger(__name__)

CACHE_FORMAT = "kgneeds-graph/1"
DUMP_MIN_WEIGHT = 1.0

_WS = re.compile(r"\s+")


class InvalidConceptError(ValueError):
    pass


class EmptyGraphError(ValueError):
    pass


def normalize_concept(surface: str) -> str:
    """Map a surface string or ConceptNet URI to a bare concept id.

    ``/c/en/gold_medal/n`` and ``Gold Medal`` both become ``gold_medal``.
    """
    text = surface.strip()
    if text.startswith("/c/"):
        parts = text.split("/")
        # ['', 'c', lang, term, pos?, ...]
        text = parts[3] if len(parts) > 3 else ""
    text = _WS.sub("_", text.strip().lower())
    text = text.strip("_")
    if not text:
        raise InvalidConceptError(f"empty concept after normalization: {surface!r}")
    return text


def concept_language(uri: str) -> str | None:
    """Language tag of a ``/c/<lang>/...`` URI, or None for bare names."""
    if uri.startswith("/c/"):
        parts = uri.split("/")
        if len(parts) > 2 and parts[2]:
            return parts[2]
    return None


def normalize_relation(raw: str) -> str:
    name = raw.strip()
    if name.startswith("/r/"):
        name = name[3:]
    if not name:
        raise ValueError("empty relation")
    return name


@dataclass(frozen=True, order=True)
class Edge:
    head: str
    relation: str
    tail: str
    weight: float = 1.0


class KnowledgeGraph:
    """Immutable concept graph with out/in adjacency.

    Build through :func:`ingest_edges` or :meth:`from_edges`; there is no
    mutation API.
    """

    __slots__ = ("_edges", "_vertices", "_vertex_set", "_out", "_in", "_relations")

    def __init__(self, edges: Iterable[Edge]):
        best: dict[tuple[str, str, str], float] = {}
        for e in edges:
            if e.head == e.tail:
                continue
            if e.weight < 0:
                raise ValueError(f"negative edge weight: {e}")
            key = (e.head, e.relation, e.tail)
            if key not in best or e.weight > best[key]:
                best[key] = e.weight
        ordered = tuple(Edge(h, r, t, w) for (h, r, t), w in sorted(best.items()))
        out: dict[str, list[Edge]] = {}
        inc: dict[str, list[Edge]] = {}
        for e in ordered:
            out.setdefault(e.head, []).append(e)
            inc.setdefault(e.tail, []).append(e)
        vertices = sorted(set(out) | set(inc))
        self._edges = ordered
        self._vertices = tuple(vertices)
        self._vertex_set = frozenset(vertices)
        self._out = {k: tuple(v) for k, v in out.items()}
        self._in = {k: tuple(v) for k, v in inc.items()}
        self._relations = frozenset(e.relation for e in ordered)

    @classmethod
    def from_edges(cls, triples: Iterable[tuple]) -> "KnowledgeGraph":
        """Build from ``(head, relation, tail[, weight])`` tuples (normalizing names)."""
        edges = []
        for t in triples:
            head, rel, tail = t[:3]
            weight = float(t[3]) if len(t) > 3 else 1.0
            edges.append(
                Edge(normalize_concept(head), normalize_relation(rel), normalize_concept(tail), weight)
            )
        return cls(edges)

    @property
    def vertices(self) -> tuple[str, ...]:
        return self._vertices

    @property
    def edges(self) -> tuple[Edge, ...]:
        return self._edges

    @property
    def relations(self) -> frozenset[str]:
        return self._relations

    @property
    def num_vertices(self) -> int:
        return len(self._vertices)

    @property
    def num_edges(self) -> int:
        return len(self._edges)

    def __contains__(self, concept: object) -> bool:
        return concept in self._vertex_set

    def contains(self, concept: str) -> bool:
        return concept in self._vertex_set

    def out_edges(self, concept: str) -> tuple[Edge, ...]:
        return self._out.get(concept, ())

    def in_edges(self, concept: str) -> tuple[Edge, ...]:
        return self._in.get(concept, ())

    def incident(self, concept: str) -> Iterator[tuple[Edge, str, str]]:
        """Yield ``(edge, other_endpoint, direction)`` for every edge touching ``concept``."""
        for e in self._out.get(concept, ()):
            yield e, e.tail, "out"
        for e in self._in.get(concept, ()):
            yield e, e.head, "in"

    def neighbors(self, concept: str) -> set[tuple[str, str, str]]:
        """All ``(relation, concept, direction)`` one edge away; empty for unknown concepts."""
        return {(e.relation, other, d) for e, other, d in self.incident(concept)}

    def neighbor_ids(self, concept: str) -> set[str]:
        return {other for _, other, _ in self.incident(concept)}

    def edges_between(self, a: str, b: str) -> list[Edge]:
        """Every edge joining ``a`` and ``b`` in either direction."""
        found = [e for e in self._out.get(a, ()) if e.tail == b]
        found += [e for e in self._out.get(b, ()) if e.tail == a]
        return found

    def stats(self) -> dict:
        return {
            "vertices": self.num_vertices,
            "edges": self.num_edges,
            "relations": len(self._relations),
        }

    def __repr__(self) -> str:
        return f"KnowledgeGraph(|V|={self.num_vertices}, |E|={self.num_edges})"

    def __getstate__(self):
        return {"edges": self._edges}

    def __setstate__(self, state):
        self.__init__(state["edges"])


def neighbors(graph: KnowledgeGraph, concept: str) -> set[tuple[str, str, str]]:
    return graph.neighbors(concept)


def contains(graph: KnowledgeGraph, concept: str) -> bool:
    return graph.contains(concept)


def _parse_conceptnet_line(fields: list[str]) -> tuple[str, str, str, float]:
    _, rel_uri, start, end, meta = fields
    weight = float(json.loads(meta).get("weight", 1.0))
    return rel_uri, start, end, weight


def _parse_csv_line(line: str) -> tuple[str, str, str, float]:
    row = next(csv.reader([line]))
    if len(row) != 4:
        raise ValueError(f"expected 4 fields, got {len(row)}")
    rel, head, tail, weight = row
    return rel, head, tail, float(weight)


def _is_csv_header(line: str) -> bool:
    return line.replace(" ", "").lower().startswith("relation,head,tail")


def ingest_edges(
    source: Iterable[str],
    language_filter: str | None = "en",
    min_weight: float | None = None,
) -> KnowledgeGraph:
    """Parse edge records into a :class:`KnowledgeGraph`.

    Malformed records are logged with their line number and skipped. Edges
    whose endpoints carry a language tag other than ``language_filter`` are
    dropped; bare (untagged) names always pass. Duplicate triples keep the
    maximum weight.

    ``min_weight=None`` applies the per-format default: 1.0 for full
    ConceptNet assertion records, 0.0 for simplified CSV rows.
    """
    edges: list[Edge] = []
    for lineno, raw in enumerate(source, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        try:
            fields = line.split("\t")
            if len(fields) == 5:
                rel, head, tail, weight = _parse_conceptnet_line(fields)
                threshold = DUMP_MIN_WEIGHT if min_weight is None else min_weight
            elif len(fields) == 1:
                if lineno == 1 and _is_csv_header(line):
                    continue
                rel, head, tail, weight = _parse_csv_line(line)
                threshold = 0.0 if min_weight is None else min_weight
            else:
                raise ValueError(f"unrecognized record with {len(fields)} tab fields")
            if language_filter is not None:
                langs = {concept_language(head.strip()), concept_language(tail.strip())}
                langs.discard(None)
                if langs and langs != {language_filter}:
                    continue
            if weight < threshold:
                continue
            edge = Edge(normalize_concept(head), normalize_relation(rel), normalize_concept(tail), weight)
        except (ValueError, KeyError, json.JSONDecodeError, StopIteration) as exc:
            logger.warning("line %d: skipping malformed record (%s)", lineno, exc)
            continue
        if edge.head == edge.tail:
            continue
        edges.append(edge)
    if not edges:
        raise EmptyGraphError("no edges passed parsing and filtering")
    return KnowledgeGraph(edges)


def open_text(path: str | Path) -> io.TextIOBase:
    path = Path(path)
    if path.suffix == ".gz":
        return io.TextIOWrapper(gzip.open(path, "rb"), encoding="utf-8")
    return open(path, encoding="utf-8")


def load_graph(
    path: str | Path, language_filter: str | None = "en", min_weight: float | None = None
) -> KnowledgeGraph:
    """Read a dump file (plain or ``.gz``), or a cache written by :func:`save_cache`."""
    path = Path(path)
    if path.suffix == ".pkl":
        return load_cache(path)
    with open_text(path) as fh:
        return ingest_edges(fh, language_filter=language_filter, min_weight=min_weight)


def save_cache(graph: KnowledgeGraph, path: str | Path) -> None:
    payload = {
        "format": CACHE_FORMAT,
        "edges": [(e.head, e.relation, e.tail, e.weight) for e in graph.edges],
    }
    with open(path, "wb") as fh:
        pickle.dump(payload, fh, protocol=4)


def load_cache(path: str | Path) -> KnowledgeGraph:
    with open(path, "rb") as fh:
        payload = pickle.load(fh)
    if not isinstance(payload, dict) or payload.get("format") != CACHE_FORMAT:
        raise ValueError(f"{path}: not a graph cache")
    return KnowledgeGraph(Edge(*t) for t in payload["edges"])
