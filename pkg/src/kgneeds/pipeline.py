"""Stage functions shared by the command line and the tests.

Every artifact is a file; every stage is a deterministic function of its
inputs and the seed.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy

from . import __version__
from .concept_link import (
    DEFAULT_STOPWORDS,
    Instance,
    LabelConceptMap,
    LabelSet,
    label_concepts,
    read_label_overrides,
    text_concepts,
)
from .kg_store import KnowledgeGraph
from .ranking import CC_PATH, CZ, KnowledgePath, RankedPathList, RankingConfig, enumerate_paths, rank_and_select
from .subgraph import SeedSet, SubGraph, induce

logger = logging.getLogger(__name__)

PATH_TYPE_FLAGS = {"cz": (CZ,), "cc": (CC_PATH,), "cz+cc": (CZ, CC_PATH), "cc+cz": (CZ, CC_PATH)}
THEORY_L2 = {"maslow": 0.01, "reiss": 0.1}


class PipelineConfigError(ValueError):
    pass


@dataclass
class PipelineConfig:
    graph: str | None = None
    instances: str | None = None
    embeddings: str | None = None
    embedding_dim: int | None = None
    label_theory: str = "reiss"
    labels: list[str] | None = None
    drop_labels: list[str] = field(default_factory=list)
    label_overrides: str | None = None
    label_preset: str = "label-to-concept"
    language: str = "en"
    min_weight: float | None = None
    max_ngram: int = 3
    max_len: int = 4
    max_paths_per_pair: int = 10
    neighbor_cap: int | None = 50
    strategy: str = "CC+PPR"
    alpha: float = 0.85
    k: int = 3
    max_hops: int = 4
    enumeration_cap: int | None = 1000
    path_types: str = "cz"
    paths: str | None = None
    model: str | None = None
    predictions: str | None = None
    hidden_size: int = 100
    gate_size: int = 100
    learning_rate: float = 0.001
    batch_size: int = 32
    dropout: float = 0.5
    l2: float | None = None
    epochs: int = 20
    threshold: float = 0.5
    negative_weighting: str = "unit"
    use_knowledge: bool = True
    dump_subgraphs: bool = False
    workers: int | None = None
    out: str = "out"
    seed: int = 0

    @classmethod
    def from_sources(cls, file_values: dict | None = None, overrides: dict | None = None) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        merged: dict = {}
        for src in (file_values or {}, overrides or {}):
            unknown = set(src) - known
            if unknown:
                raise PipelineConfigError(f"unknown config keys: {sorted(unknown)}")
            merged.update({k: v for k, v in src.items() if v is not None})
        cfg = cls(**merged)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.path_types not in PATH_TYPE_FLAGS:
            raise PipelineConfigError(f"path_types must be one of {sorted(PATH_TYPE_FLAGS)}")
        try:
            self.ranking()
        except ValueError as exc:
            raise PipelineConfigError(str(exc)) from None

    def ranking(self) -> RankingConfig:
        return RankingConfig(
            strategy=self.strategy, alpha=self.alpha, k=self.k, max_hops=self.max_hops,
            enumeration_cap=self.enumeration_cap, seed=self.seed,
        )

    def label_set(self) -> LabelSet:
        base = LabelSet.named(self.label_theory, self.labels)
        return base.without(self.drop_labels) if self.drop_labels else base

    def l2_value(self) -> float:
        if self.l2 is not None:
            return self.l2
        return THEORY_L2.get(self.label_theory.lower(), 0.01)

    def out_path(self, name: str) -> Path:
        return Path(self.out) / name

    def snapshot(self) -> dict:
        return asdict(self)


def require_file(path: str | None, what: str) -> Path:
    if not path:
        raise PipelineConfigError(f"no {what} file given")
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"{what} file not found: {p}")
    return p


# --------------------------------------------------------------------------
# path extraction


@dataclass
class ExtractionSettings:
    label_map: LabelConceptMap
    labels: tuple[str, ...]
    ranking: RankingConfig
    path_types: tuple[str, ...]
    max_ngram: int = 3
    max_len: int = 4
    max_paths_per_pair: int = 10
    neighbor_cap: int | None = 50
    stopwords: frozenset[str] = DEFAULT_STOPWORDS

    def need_concepts(self) -> list[str]:
        return list(dict.fromkeys(self.label_map.concepts(self.labels)))


@dataclass
class InstancePaths:
    ranked: RankedPathList
    linked: int
    subgraph: SubGraph | None = None


def process_instance(graph: KnowledgeGraph, inst: Instance, settings: ExtractionSettings) -> InstancePaths:
    """Link → induce → enumerate → score → select for one instance."""
    text = text_concepts(inst, graph, settings.max_ngram, settings.stopwords)
    seeds = SeedSet.build(graph, text, settings.need_concepts())
    entries: dict = {}
    sub = None
    if seeds.text_concepts:
        sub = induce(graph, seeds, settings.max_len, settings.max_paths_per_pair, settings.neighbor_cap)
        paths = enumerate_paths(
            sub, seeds, settings.ranking.max_hops, settings.ranking.enumeration_cap, settings.path_types
        )
        entries = rank_and_select(paths, sub, settings.ranking, seeds, inst.instance_id).entries
    if CZ in settings.path_types:
        # one record per need concept, even when nothing connects to it
        full = {(CZ, z): entries.get((CZ, z), []) for z in seeds.need_concepts}
        full.update({k: v for k, v in entries.items() if k[0] != CZ})
        entries = full
    return InstancePaths(RankedPathList(inst.instance_id, entries), len(seeds.text_concepts), sub)


_WORKER_STATE: dict = {}


def _init_worker(graph: KnowledgeGraph, settings: ExtractionSettings) -> None:
    _WORKER_STATE["graph"] = graph
    _WORKER_STATE["settings"] = settings


def _work(inst: Instance) -> InstancePaths:
    return process_instance(_WORKER_STATE["graph"], inst, _WORKER_STATE["settings"])


def extract_all(
    graph: KnowledgeGraph,
    instances: Sequence[Instance],
    settings: ExtractionSettings,
    workers: int | None = None,
) -> list[InstancePaths]:
    """Process instances, in parallel when ``workers > 1``; output follows input order."""
    workers = workers or os.cpu_count() or 1
    if workers <= 1 or len(instances) < 2:
        return [process_instance(graph, inst, settings) for inst in instances]
    with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=(graph, settings)) as pool:
        return list(pool.map(_work, instances, chunksize=max(1, len(instances) // (4 * workers))))


def settings_from_config(cfg: PipelineConfig, graph: KnowledgeGraph) -> ExtractionSettings:
    label_set = cfg.label_set()
    overrides = read_label_overrides(cfg.label_overrides) if cfg.label_overrides else None
    label_map = label_concepts(label_set, overrides, graph, cfg.label_preset)
    return ExtractionSettings(
        label_map=label_map,
        labels=label_set.labels,
        ranking=cfg.ranking(),
        path_types=PATH_TYPE_FLAGS[cfg.path_types],
        max_ngram=cfg.max_ngram,
        max_len=cfg.max_len,
        max_paths_per_pair=cfg.max_paths_per_pair,
        neighbor_cap=cfg.neighbor_cap,
    )


def write_ranked_paths(results: Iterable[RankedPathList], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ranked in results:
            for rec in ranked.to_records():
                fh.write(json.dumps(rec) + "\n")


def read_ranked_paths(path: str | Path) -> dict[str, list[KnowledgePath]]:
    """Flat path list per instance, in file order."""
    out: dict[str, list[KnowledgePath]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            rec = json.loads(line)
            try:
                plist = out.setdefault(rec["instance_id"], [])
                for p in rec["paths"]:
                    plist.append(KnowledgePath.from_json(p, rec["path_type"], rec["endpoint"]))
            except (KeyError, TypeError, IndexError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed ranked-path record ({exc})") from None
    return out


# --------------------------------------------------------------------------
# manifests


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _timestamp() -> str:
    # SOURCE_DATE_EPOCH pins the clock for byte-reproducible reruns
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = int(epoch) if epoch else int(time.time())
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(t))


def write_manifest(cfg: PipelineConfig, command: str, inputs: Sequence[str | Path], outputs: Sequence[str | Path]) -> Path:
    manifest = {
        "command": command,
        "config": cfg.snapshot(),
        "versions": {
            "kgneeds": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "inputs": {str(p): file_digest(p) for p in inputs if p and Path(p).is_file()},
        "outputs": {str(p): file_digest(p) for p in outputs if Path(p).is_file()},
        "created": _timestamp(),
    }
    path = cfg.out_path(f"manifest_{command}.json")
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
