"""Micro-averaged and per-class precision / recall / F1 for multi-label output.

Zero denominators yield 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence


class AlignmentError(ValueError):
    pass


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def _f1(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if (p + r) else 0.0


@dataclass
class ClassScores:
    precision: float
    recall: float
    f1: float
    support: int
    tp: int = 0
    fp: int = 0
    fn: int = 0


@dataclass
class MetricsReport:
    micro_precision: float
    micro_recall: float
    micro_f1: float
    tp: int
    fp: int
    fn: int
    per_class: dict[str, ClassScores] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "micro_precision": self.micro_precision,
            "micro_recall": self.micro_recall,
            "micro_f1": self.micro_f1,
            "counts": {"tp": self.tp, "fp": self.fp, "fn": self.fn},
            "per_class": {
                label: {"precision": c.precision, "recall": c.recall, "f1": c.f1, "support": c.support}
                for label, c in self.per_class.items()
            },
            "zero_division": 0.0,
        }

    def table(self) -> str:
        width = max([len(l) for l in self.per_class] + [5])
        lines = [f"{'label':<{width}}  {'P':>6}  {'R':>6}  {'F1':>6}  {'supp':>5}"]
        for label, c in self.per_class.items():
            lines.append(f"{label:<{width}}  {c.precision:6.4f}  {c.recall:6.4f}  {c.f1:6.4f}  {c.support:5d}")
        lines.append(
            f"{'micro':<{width}}  {self.micro_precision:6.4f}  {self.micro_recall:6.4f}  "
            f"{self.micro_f1:6.4f}  {self.tp + self.fn:5d}"
        )
        return "\n".join(lines)


def _aligned(predictions: Mapping[str, set] | Sequence, golds: Mapping[str, set] | Sequence):
    if isinstance(predictions, Mapping) != isinstance(golds, Mapping):
        raise AlignmentError("predictions and golds must both be mappings or both sequences")
    if isinstance(predictions, Mapping):
        missing = sorted(set(golds) - set(predictions))
        extra = sorted(set(predictions) - set(golds))
        if missing or extra:
            raise AlignmentError(f"instance ids differ: missing predictions {missing}, unknown ids {extra}")
        return [(set(predictions[k]), set(golds[k])) for k in golds]
    if len(predictions) != len(golds):
        raise AlignmentError(f"{len(predictions)} predictions vs {len(golds)} gold instances")
    return [(set(p), set(g)) for p, g in zip(predictions, golds)]


def per_class_scores(predictions, golds, labels: Sequence[str] | None = None) -> dict[str, ClassScores]:
    pairs = _aligned(predictions, golds)
    if labels is None:
        labels = sorted(set().union(*(p | g for p, g in pairs))) if pairs else []
    out = {}
    for label in labels:
        tp = sum(1 for p, g in pairs if label in p and label in g)
        fp = sum(1 for p, g in pairs if label in p and label not in g)
        fn = sum(1 for p, g in pairs if label not in p and label in g)
        prec, rec = _ratio(tp, tp + fp), _ratio(tp, tp + fn)
        out[label] = ClassScores(prec, rec, _f1(prec, rec), tp + fn, tp, fp, fn)
    return out


def per_class_f1(predictions, golds, labels: Sequence[str] | None = None) -> dict[str, float]:
    return {l: c.f1 for l, c in per_class_scores(predictions, golds, labels).items()}


def micro_prf(predictions, golds, labels: Sequence[str] | None = None) -> MetricsReport:
    """Pool TP/FP/FN over every (instance, label) pair.

    ``predictions``/``golds`` are either aligned sequences of label sets or
    mappings from instance id to label set (ids must match exactly).
    """
    pairs = _aligned(predictions, golds)
    if labels is not None:
        keep = set(labels)
        unknown = set().union(*(p | g for p, g in pairs)) - keep if pairs else set()
        if unknown:
            raise ValueError(f"labels outside the label set: {sorted(unknown)}")
    tp = sum(len(p & g) for p, g in pairs)
    fp = sum(len(p - g) for p, g in pairs)
    fn = sum(len(g - p) for p, g in pairs)
    prec, rec = _ratio(tp, tp + fp), _ratio(tp, tp + fn)
    return MetricsReport(prec, rec, _f1(prec, rec), tp, fp, fn, per_class_scores(predictions, golds, labels))
