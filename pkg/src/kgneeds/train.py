"""Mini-batch Adam training, prediction and attention traces."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .concept_link import Instance, LabelSet
from .features import EmbeddingTable, Example, collate, featurize
from .model import (
    ModelConfig,
    check_params,
    class_weights,
    forward,
    init_params,
    objective_and_grads,
)
from .ranking import KnowledgePath

logger = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class Prediction:
    instance_id: str
    probabilities: dict[str, float]
    decisions: dict[str, bool]

    @property
    def labels(self) -> list[str]:
        return [l for l, on in self.decisions.items() if on]

    def to_json(self) -> dict:
        return {"instance_id": self.instance_id, "probabilities": self.probabilities, "labels": self.labels}


@dataclass
class AttentionTrace:
    instance_id: str
    sentence: list[tuple[str, float]]
    context: list[tuple[str, float]]
    paths: list[tuple[str, float]]

    def to_json(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "token_weights": {
                "sentence": [[t, w] for t, w in self.sentence],
                "context": [[t, w] for t, w in self.context],
            },
            "path_weights": [[p, w] for p, w in self.paths],
            "knowledge_free": not self.paths,
        }


def build_examples(
    instances: Sequence[Instance],
    paths: Mapping[str, Sequence[KnowledgePath]],
    embeddings: EmbeddingTable,
    label_set: LabelSet,
) -> list[Example]:
    return [featurize(inst, paths.get(inst.instance_id, ()), embeddings, label_set) for inst in instances]


def _adam_step(params, grads, m, v, step: int, config: ModelConfig) -> None:
    b1, b2 = config.beta1, config.beta2
    lr_t = config.learning_rate * np.sqrt(1.0 - b2**step) / (1.0 - b1**step)
    for name, g in grads.items():
        m[name] = b1 * m[name] + (1.0 - b1) * g
        v[name] = b2 * v[name] + (1.0 - b2) * g * g
        params[name] -= lr_t * m[name] / (np.sqrt(v[name]) + config.adam_eps)


def train(
    config: ModelConfig,
    examples: Sequence[Example],
    params: dict[str, np.ndarray] | None = None,
) -> tuple[dict[str, np.ndarray], list[dict]]:
    """Train with Adam on weighted BCE plus ``l2 * ||params||^2``.

    All randomness (init, shuffling, dropout) derives from ``config.seed``.
    Returns the parameters and one log entry per epoch.
    """
    if not examples:
        raise TrainingError("empty training set")
    params = init_params(config) if params is None else {k: v.copy() for k, v in params.items()}
    check_params(params, config)
    rng = np.random.default_rng([config.seed, 1])
    weights = class_weights(np.stack([e.labels for e in examples]))
    m = {k: np.zeros_like(v) for k, v in params.items()}
    v = {k: np.zeros_like(p) for k, p in params.items()}
    log = []
    step = 0
    n = len(examples)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        total, penalty_total, batches = 0.0, 0.0, 0
        for start in range(0, n, config.batch_size):
            idx = order[start: start + config.batch_size]
            batch = collate([examples[i] for i in idx], config.embedding_dim, config.use_knowledge)
            value, grads, _ = objective_and_grads(params, config, batch, weights, dropout_rng=rng)
            penalty = 0.0
            if config.l2 > 0:
                for name, p in params.items():
                    penalty += config.l2 * float(np.sum(p * p))
                    grads[name] += 2.0 * config.l2 * p
            if not np.isfinite(value) or not all(np.isfinite(g).all() for g in grads.values()):
                bad = sorted(k for k, g in grads.items() if not np.isfinite(g).all())
                raise TrainingError(
                    f"non-finite loss or gradient at epoch {epoch}, batch {batches + 1} "
                    f"(loss={value}, bad gradients: {bad})"
                )
            step += 1
            _adam_step(params, grads, m, v, step, config)
            total += value
            penalty_total += penalty
            batches += 1
        entry = {"epoch": epoch, "loss": total / batches, "l2_penalty": penalty_total / batches}
        log.append(entry)
        logger.info("epoch %d loss %.6f", epoch, entry["loss"])
    return params, log


def predict_proba(params, config: ModelConfig, examples: Sequence[Example], batch_size: int | None = None):
    """Probabilities ``(N, Z)`` and per-example attention weights."""
    bs = batch_size or config.batch_size
    probs, traces = [], []
    for start in range(0, len(examples), bs):
        chunk = examples[start: start + bs]
        batch = collate(chunk, config.embedding_dim, config.use_knowledge)
        tr = forward(params, config, batch)
        probs.append(tr.probabilities)
        for b, ex in enumerate(chunk):
            n_s, n_c = len(ex.sentence), len(ex.context)
            n_p = len(ex.paths) if config.use_knowledge else 0
            traces.append(
                (tr.sentence_weights[b, :n_s], tr.context_weights[b, :n_c], tr.path_weights[b, :n_p])
            )
    return np.concatenate(probs) if probs else np.zeros((0, config.num_labels)), traces


def predict(params, config: ModelConfig, examples: Sequence[Example]) -> tuple[list[Prediction], list[AttentionTrace]]:
    """Thresholded decisions (``p >= threshold``) plus attention traces."""
    probs, raw = predict_proba(params, config, examples)
    preds, traces = [], []
    for ex, row, (ws, wc, wp) in zip(examples, probs, raw):
        pr = {l: float(p) for l, p in zip(config.labels, row)}
        preds.append(Prediction(ex.instance_id, pr, {l: p >= config.threshold for l, p in pr.items()}))
        traces.append(
            AttentionTrace(
                ex.instance_id,
                list(zip(ex.sentence_tokens, map(float, ws))),
                list(zip(ex.context_tokens, map(float, wc))),
                list(zip(ex.path_texts[: len(wp)], map(float, wp))),
            )
        )
    return preds, traces
