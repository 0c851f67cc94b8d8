"""Word vectors, path serialization and mini-batch assembly."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .concept_link import Instance, LabelSet
from .ranking import KnowledgePath

logger = logging.getLogger(__name__)

_CAMEL = re.compile(r"[A-Z]+(?=[A-Z][a-z])|[A-Z]?[a-z]+|[A-Z]+|\d+")


class EmbeddingError(ValueError):
    pass


class EmbeddingTable:
    """Frozen word vectors; unknown words map to the zero vector."""

    oov_policy = "zero"

    def __init__(self, vectors: dict[str, np.ndarray], dim: int):
        self.dim = dim
        self.vectors = vectors
        self._zero = np.zeros(dim)

    def __len__(self) -> int:
        return len(self.vectors)

    def __contains__(self, word: str) -> bool:
        return word.lower() in self.vectors

    def lookup(self, word: str) -> np.ndarray:
        return self.vectors.get(word.lower(), self._zero)

    def embed(self, tokens: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(tokens), self.dim))
        for i, tok in enumerate(tokens):
            vec = self.vectors.get(tok.lower())
            if vec is not None:
                out[i] = vec
        return out


def load_embeddings(source: str | Path | Iterable[str], dimension: int) -> EmbeddingTable:
    """Parse whitespace-separated ``word v1 ... vd`` lines (GloVe text format)."""
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8") as fh:
            return load_embeddings(fh, dimension)
    vectors: dict[str, np.ndarray] = {}
    for lineno, line in enumerate(source, start=1):
        parts = line.rstrip().split(" ")
        if len(parts) == 1 and not parts[0]:
            continue
        if len(parts) != dimension + 1:
            logger.warning("line %d: expected %d values, got %d; skipped", lineno, dimension, len(parts) - 1)
            continue
        try:
            vec = np.array([float(x) for x in parts[1:]])
        except ValueError:
            logger.warning("line %d: non-numeric vector; skipped", lineno)
            continue
        vectors[parts[0].lower()] = vec
    if not vectors:
        raise EmbeddingError("no valid embedding lines")
    return EmbeddingTable(vectors, dimension)


def save_embeddings(table: EmbeddingTable, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for word, vec in table.vectors.items():
            fh.write(word + " " + " ".join(repr(float(x)) for x in vec) + "\n")


def split_relation(name: str) -> list[str]:
    """``CausesDesire`` -> ``['causes', 'desire']``."""
    return [w.lower() for w in _CAMEL.findall(name)] or [name.lower()]


def path_tokens(path: KnowledgePath | tuple[Sequence[str], Sequence]) -> list[str]:
    """Serialize a path as concept words interleaved with relation words."""
    if isinstance(path, KnowledgePath):
        concepts, relations = path.concepts, [r for r, _ in path.relations]
    else:
        concepts, relations = path
        relations = [r[0] if isinstance(r, tuple) else r for r in relations]
    tokens = [w for w in concepts[0].split("_") if w]
    for rel, concept in zip(relations, concepts[1:]):
        tokens.extend(split_relation(rel))
        tokens.extend(w for w in concept.split("_") if w)
    return tokens


@dataclass
class Example:
    """Embedded inputs of one instance."""

    instance_id: str
    sentence: np.ndarray  # (n, E)
    context: np.ndarray  # (m, E), m may be 0
    paths: list[np.ndarray]  # each (l, E)
    labels: np.ndarray  # (Z,)
    sentence_tokens: list[str]
    context_tokens: list[str]
    path_texts: list[str]


def featurize(
    instance: Instance,
    paths: Sequence[KnowledgePath],
    embeddings: EmbeddingTable,
    label_set: LabelSet,
) -> Example:
    sent_toks = instance.encoder_tokens()
    ctx_toks = instance.context_tokens
    ptoks = [path_tokens(p) for p in paths]
    labels = np.array([1.0 if l in instance.gold_labels else 0.0 for l in label_set.labels])
    return Example(
        instance_id=instance.instance_id,
        sentence=embeddings.embed(sent_toks),
        context=embeddings.embed(ctx_toks),
        paths=[embeddings.embed(t) for t in ptoks if t],
        labels=labels,
        sentence_tokens=sent_toks,
        context_tokens=ctx_toks,
        path_texts=[" ".join(t) for t in ptoks if t],
    )


@dataclass
class Batch:
    sent: np.ndarray  # (B, Ts, E)
    sent_mask: np.ndarray  # (B, Ts)
    ctx: np.ndarray  # (B, Tc, E)
    ctx_mask: np.ndarray  # (B, Tc)
    paths: np.ndarray  # (B*P, Tp, E)
    path_mask: np.ndarray  # (B*P, Tp)
    path_valid: np.ndarray  # (B, P)
    labels: np.ndarray  # (B, Z)

    @property
    def size(self) -> int:
        return self.sent.shape[0]


def _pad(seqs: Sequence[np.ndarray], dim: int) -> tuple[np.ndarray, np.ndarray]:
    longest = max([len(s) for s in seqs] + [1])
    arr = np.zeros((len(seqs), longest, dim))
    mask = np.zeros((len(seqs), longest))
    for i, s in enumerate(seqs):
        arr[i, : len(s)] = s
        mask[i, : len(s)] = 1.0
    return arr, mask


def collate(examples: Sequence[Example], dim: int, use_paths: bool = True) -> Batch:
    sent, sent_mask = _pad([e.sentence for e in examples], dim)
    ctx, ctx_mask = _pad([e.context for e in examples], dim)
    per = [e.paths if use_paths else [] for e in examples]
    p_max = max(len(p) for p in per)
    flat = []
    valid = np.zeros((len(examples), p_max))
    empty = np.zeros((0, dim))
    for b, plist in enumerate(per):
        for j in range(p_max):
            if j < len(plist):
                flat.append(plist[j])
                valid[b, j] = 1.0
            else:
                flat.append(empty)
    if flat:
        paths, path_mask = _pad(flat, dim)
    else:
        paths, path_mask = np.zeros((0, 1, dim)), np.zeros((0, 1))
    labels = np.stack([e.labels for e in examples])
    return Batch(sent, sent_mask, ctx, ctx_mask, paths, path_mask, valid, labels)
