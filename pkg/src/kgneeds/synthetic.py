"""Planted-knowledge task generator for experiments and end-to-end tests.

Each instance carries one unique key token among random noise words, so
the text alone says nothing about the label. The graph links the key to a
label-specific cue concept that connects to the matching need concept,
plus a decoy concept that connects to every need. Only the cue path
encodes the label.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .concept_link import Instance, LabelSet
from .features import EmbeddingTable, save_embeddings
from .kg_store import Edge, KnowledgeGraph

PLANTED_LABELS = ("alpha", "beta", "gamma", "delta")
RELATION = "RelatedTo"


@dataclass
class PlantedTask:
    label_set: LabelSet
    graph: KnowledgeGraph
    train: list[Instance]
    test: list[Instance]
    embeddings: EmbeddingTable
    cue_of: dict[str, str]

    def write(self, directory: str | Path) -> dict[str, Path]:
        """Write graph.csv, train.jsonl, test.jsonl and embeddings.txt."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        files = {
            "graph": d / "graph.csv",
            "train": d / "train.jsonl",
            "test": d / "test.jsonl",
            "embeddings": d / "embeddings.txt",
        }
        with open(files["graph"], "w", encoding="utf-8") as fh:
            fh.write("relation,head,tail,weight\n")
            for e in self.graph.edges:
                fh.write(f"{e.relation},{e.head},{e.tail},{e.weight}\n")
        for split in ("train", "test"):
            with open(files[split], "w", encoding="utf-8") as fh:
                for inst in getattr(self, split):
                    fh.write(json.dumps(inst.to_record(self.label_set.labels)) + "\n")
        save_embeddings(self.embeddings, files["embeddings"])
        return files


def planted_task(
    n_train: int = 500,
    n_test: int = 200,
    labels: Sequence[str] = PLANTED_LABELS,
    dim: int = 16,
    n_noise: int = 200,
    n_decoys: int = 8,
    second_label_rate: float = 0.3,
    seed: int = 0,
) -> PlantedTask:
    rng = np.random.default_rng(seed)
    labels = tuple(labels)
    noise = [f"w{i:03d}" for i in range(n_noise)]
    decoys = [f"decoy{i}" for i in range(n_decoys)]
    cue_of = {label: f"cue{j}" for j, label in enumerate(labels)}

    edges = [Edge(cue, RELATION, label, 1.0) for label, cue in cue_of.items()]
    edges += [Edge(d, RELATION, label, 1.0) for d in decoys for label in labels]

    def sample(n: int, prefix: str) -> list[Instance]:
        out = []
        for i in range(n):
            key = f"{prefix}key{i:04d}"
            gold = {labels[rng.integers(len(labels))]}
            if rng.random() < second_label_rate:
                gold.add(labels[rng.integers(len(labels))])
            for label in sorted(gold):
                edges.append(Edge(key, RELATION, cue_of[label], 1.0))
            edges.append(Edge(key, RELATION, decoys[rng.integers(n_decoys)], 1.0))
            words = [str(w) for w in rng.choice(noise, size=int(rng.integers(4, 9)))]
            words.insert(int(rng.integers(len(words) + 1)), key)
            context = tuple(
                tuple(str(w) for w in rng.choice(noise, size=int(rng.integers(3, 7))))
                for _ in range(int(rng.integers(0, 3)))
            )
            out.append(
                Instance(
                    instance_id=f"{prefix}{i:04d}",
                    story_id=f"{prefix}story{i // 5:04d}",
                    line_no=i % 5 + 1,
                    sentence=tuple(words),
                    context=context,
                    gold_labels=frozenset(gold),
                )
            )
        return out

    train = sample(n_train, "tr")
    test = sample(n_test, "te")
    vocab = set(noise) | set(decoys) | set(cue_of.values()) | set(labels) | {"related", "to"}
    vocab |= {inst.sentence[j] for inst in train + test for j in range(len(inst.sentence))}
    vectors = {w: rng.normal(0.0, 1.0, dim) for w in sorted(vocab)}
    return PlantedTask(
        LabelSet("planted", labels),
        KnowledgeGraph(edges),
        train,
        test,
        EmbeddingTable(vectors, dim),
        cue_of,
    )
