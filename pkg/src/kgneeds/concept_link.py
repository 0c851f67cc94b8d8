"""Link story text and human-need labels to graph concepts."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .kg_store import KnowledgeGraph, normalize_concept, InvalidConceptError

logger = logging.getLogger(__name__)

MASLOW_LABELS = ("physiological", "stability", "love", "esteem", "spiritual growth")
REISS_LABELS = (
    "status", "approval", "tranquility", "competition", "health", "family",
    "romance", "food", "indep", "power", "order", "curiosity", "serenity",
    "honor", "belonging", "contact", "savings", "idealism", "rest",
)

# Three labels whose ConceptNet counterpart is not the identically named
# concept. Keys are dataset labels.
LABEL_TO_CONCEPT_EXCEPTIONS = {"tranquility": "safety", "serenity": "calm", "contact": "social"}
CONCEPT_TO_LABEL_EXCEPTIONS = {v: k for k, v in LABEL_TO_CONCEPT_EXCEPTIONS.items()}
EXCEPTION_PRESETS = {
    "label-to-concept": LABEL_TO_CONCEPT_EXCEPTIONS,
    "concept-to-label": CONCEPT_TO_LABEL_EXCEPTIONS,
}

DEFAULT_STOPWORDS = frozenset(
    """a an the and or but if then else of to in on at by for with from as into onto
    is are was were be been being am do does did has have had i me my we our you your
    he him his she her it its they them their this that these those there here not no
    so very too just than up down out off over again""".split()
)


class SchemaError(ValueError):
    pass


class UnknownLabelError(ValueError):
    pass


@dataclass(frozen=True)
class LabelSet:
    theory: str
    labels: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("duplicate labels")

    @classmethod
    def maslow(cls) -> "LabelSet":
        return cls("maslow", MASLOW_LABELS)

    @classmethod
    def reiss(cls, include_belonging: bool = True) -> "LabelSet":
        labels = REISS_LABELS if include_belonging else tuple(l for l in REISS_LABELS if l != "belonging")
        return cls("reiss", labels)

    @classmethod
    def named(cls, theory: str, labels: Sequence[str] | None = None) -> "LabelSet":
        theory = theory.lower()
        if theory == "maslow":
            return cls.maslow()
        if theory == "reiss":
            return cls.reiss()
        if labels is None:
            raise ValueError(f"theory {theory!r} needs an explicit label list")
        return cls(theory, tuple(labels))

    def without(self, drop: Iterable[str]) -> "LabelSet":
        drop = set(drop)
        return LabelSet(self.theory, tuple(l for l in self.labels if l not in drop))

    def __len__(self) -> int:
        return len(self.labels)

    def __iter__(self):
        return iter(self.labels)

    def index(self, label: str) -> int:
        return self.labels.index(label)


@dataclass(frozen=True)
class Instance:
    instance_id: str
    story_id: str
    line_no: int
    sentence: tuple[str, ...]
    context: tuple[tuple[str, ...], ...] = ()
    character: str = ""
    gold_labels: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self):
        if not self.sentence:
            raise SchemaError(f"{self.instance_id}: empty sentence")
        if self.line_no < 1:
            raise SchemaError(f"{self.instance_id}: line_no must be >= 1")

    @property
    def sentence_tokens(self) -> list[str]:
        return list(self.sentence)

    @property
    def context_tokens(self) -> list[str]:
        return [tok for sent in self.context for tok in sent]

    @property
    def previous_sentence(self) -> tuple[str, ...]:
        return self.context[-1] if self.context else ()

    def encoder_tokens(self) -> list[str]:
        """Sentence tokens with the character name appended."""
        toks = list(self.sentence)
        if self.character:
            toks.extend(self.character.split())
        return toks

    def to_record(self, label_order: Sequence[str] | None = None) -> dict:
        labels = sorted(self.gold_labels) if label_order is None else [l for l in label_order if l in self.gold_labels]
        return {
            "instance_id": self.instance_id,
            "story_id": self.story_id,
            "line_no": self.line_no,
            "context": [list(s) for s in self.context],
            "sentence": list(self.sentence),
            "character": self.character,
            "labels": labels,
        }


def link_text(
    tokens: Sequence[str],
    graph: KnowledgeGraph,
    max_ngram: int = 3,
    stopwords: frozenset[str] | set[str] = DEFAULT_STOPWORDS,
) -> list[str]:
    """Greedy longest-match concept linking.

    At each position the longest n-gram (up to ``max_ngram``) whose
    underscore-joined form is a graph concept is emitted and skipped over.
    Stopwords are never emitted as unigrams. Output is deduplicated in
    first-occurrence order.
    """
    if max_ngram < 1:
        raise ValueError("max_ngram must be >= 1")
    found: dict[str, None] = {}
    i = 0
    n = len(tokens)
    while i < n:
        step = 1
        for size in range(min(max_ngram, n - i), 0, -1):
            span = tokens[i:i + size]
            if size == 1 and span[0].lower() in stopwords:
                continue
            try:
                cid = normalize_concept(" ".join(span))
            except InvalidConceptError:
                continue
            if graph.contains(cid):
                found.setdefault(cid, None)
                step = size
                break
        i += step
    return list(found)


@dataclass
class LabelConceptMap:
    entries: dict[str, str]
    missing: list[str] = field(default_factory=list)

    def __getitem__(self, label: str) -> str:
        return self.entries[label]

    def concepts(self, labels: Iterable[str]) -> list[str]:
        return [self.entries[l] for l in labels]


def label_concepts(
    label_set: LabelSet,
    overrides: Mapping[str, str] | None = None,
    graph: KnowledgeGraph | None = None,
    preset: str = "label-to-concept",
) -> LabelConceptMap:
    """Identity label→concept mapping, then built-in exceptions, then overrides.

    Concepts absent from ``graph`` are kept but listed in ``missing`` and
    logged.
    """
    overrides = dict(overrides or {})
    unknown = set(overrides) - set(label_set.labels)
    if unknown:
        raise UnknownLabelError(f"override keys not in label set: {sorted(unknown)}")
    exceptions = EXCEPTION_PRESETS[preset]
    entries = {}
    for label in label_set.labels:
        concept = exceptions.get(label, label)
        concept = overrides.get(label, concept)
        entries[label] = normalize_concept(concept)
    missing = []
    if graph is not None:
        for label, concept in entries.items():
            if not graph.contains(concept):
                missing.append(label)
                logger.warning("label %r maps to concept %r which is not in the graph", label, concept)
    return LabelConceptMap(entries, missing)


def read_label_overrides(path: str | Path) -> dict[str, str]:
    """Parse ``label=concept`` lines; ``#`` starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise SchemaError(f"{path}:{lineno}: expected label=concept")
            label, concept = (p.strip() for p in line.split("=", 1))
            out[label] = concept
    return out


def _token_list(value, what: str, lineno: int) -> tuple[str, ...]:
    if not isinstance(value, list) or not all(isinstance(t, str) for t in value):
        raise SchemaError(f"line {lineno}: {what} must be an array of strings")
    return tuple(value)


def parse_instance(record: dict, label_set: LabelSet, drop_labels: Iterable[str] = (), lineno: int = 0) -> Instance:
    drop = set(drop_labels)
    try:
        iid = record["instance_id"]
        story = record["story_id"]
        line_no = record["line_no"]
        sentence = record["sentence"]
    except KeyError as exc:
        raise SchemaError(f"line {lineno}: missing field {exc.args[0]!r}") from None
    if not isinstance(iid, str) or not isinstance(story, str):
        raise SchemaError(f"line {lineno}: instance_id and story_id must be strings")
    if not isinstance(line_no, int) or isinstance(line_no, bool):
        raise SchemaError(f"line {lineno}: line_no must be an integer")
    context_raw = record.get("context", [])
    if not isinstance(context_raw, list):
        raise SchemaError(f"line {lineno}: context must be an array of token arrays")
    context = tuple(_token_list(s, "context sentence", lineno) for s in context_raw)
    character = record.get("character", "")
    if not isinstance(character, str):
        raise SchemaError(f"line {lineno}: character must be a string")
    labels_raw = record.get("labels", [])
    if not isinstance(labels_raw, list):
        raise SchemaError(f"line {lineno}: labels must be an array")
    valid = set(label_set.labels)
    labels = set()
    for name in labels_raw:
        if name in drop:
            continue
        if name not in valid:
            raise UnknownLabelError(
                f"line {lineno}: unknown label {name!r}; valid labels: {', '.join(label_set.labels)}"
            )
        labels.add(name)
    try:
        return Instance(
            instance_id=iid,
            story_id=story,
            line_no=line_no,
            sentence=_token_list(sentence, "sentence", lineno),
            context=context,
            character=character,
            gold_labels=frozenset(labels),
        )
    except SchemaError as exc:
        raise SchemaError(f"line {lineno}: {exc}") from None


def load_instances(
    source: Iterable[str] | str | Path,
    label_set: LabelSet,
    drop_labels: Iterable[str] = (),
) -> list[Instance]:
    """Read JSON-lines instance records in file order.

    Labels listed in ``drop_labels`` are removed before validation, so an
    instance may end up with an empty gold set.
    """
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8") as fh:
            return load_instances(fh, label_set, drop_labels)
    drop = set(drop_labels)
    active = label_set.without(drop)
    out = []
    for lineno, line in enumerate(source, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"line {lineno}: invalid JSON ({exc.msg})") from None
        if not isinstance(record, dict):
            raise SchemaError(f"line {lineno}: expected a JSON object")
        out.append(parse_instance(record, active, drop, lineno))
    return out


def dump_instances(instances: Iterable[Instance], path: str | Path, label_order: Sequence[str] | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(json.dumps(inst.to_record(label_order)) + "\n")


def text_concepts(
    instance: Instance,
    graph: KnowledgeGraph,
    max_ngram: int = 3,
    stopwords: frozenset[str] | set[str] = DEFAULT_STOPWORDS,
) -> list[str]:
    """Concepts from the sentence plus the directly preceding context sentence.

    The character name is not linked.
    """
    seen = dict.fromkeys(link_text(instance.sentence, graph, max_ngram, stopwords))
    seen.update(dict.fromkeys(link_text(instance.previous_sentence, graph, max_ngram, stopwords)))
    return list(seen)
