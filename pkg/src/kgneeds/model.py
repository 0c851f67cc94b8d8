"""BiLSTM + self-attention classifier with gated knowledge-path attention.

Everything is float64 numpy with hand-written reverse-mode gradients. The
forward pass is batched: variable-length sequences are right-padded and
masked, and a masked LSTM step carries its previous state unchanged.

Shapes: E embedding size, H LSTM hidden size (per direction), G dense
layer size, Z number of labels.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .features import Batch

MAGIC = b"KGNEEDS\x00"
FORMAT_VERSION = 1
PROB_EPS = 1e-7
CLASS_PROB_EPS = 1e-6

LSTMS = ("sent", "ctx", "know")


class ConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    labels: tuple[str, ...] = ()
    embedding_dim: int = 100
    hidden_size: int = 100
    gate_size: int = 100
    learning_rate: float = 0.001
    batch_size: int = 32
    dropout: float = 0.5
    l2: float = 0.01
    epochs: int = 20
    seed: int = 0
    k: int = 3
    threshold: float = 0.5
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    # "unit": negatives weighted by 1; "as_written": by (1 - w_z)
    negative_weighting: str = "unit"
    use_knowledge: bool = True

    def __post_init__(self):
        self.labels = tuple(self.labels)
        for name in ("embedding_dim", "hidden_size", "gate_size", "batch_size", "epochs", "k"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if not 0.0 < self.threshold < 1.0:
            raise ConfigError("threshold must lie in (0, 1)")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")
        if self.learning_rate <= 0 or self.l2 < 0:
            raise ConfigError("learning_rate must be positive and l2 non-negative")
        if self.negative_weighting not in ("unit", "as_written"):
            raise ConfigError("negative_weighting must be 'unit' or 'as_written'")

    @property
    def num_labels(self) -> int:
        return len(self.labels)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["labels"] = list(self.labels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


def param_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    E, H, G, Z = config.embedding_dim, config.hidden_size, config.gate_size, config.num_labels
    shapes: dict[str, tuple[int, ...]] = {}
    for name in LSTMS:
        for d in ("fw", "bw"):
            shapes[f"{name}_{d}_W"] = (4 * H, E + H)
            shapes[f"{name}_{d}_b"] = (4 * H,)
    for name in ("att_s", "att_c"):
        shapes[f"{name}_W"] = (G, 2 * H)
        shapes[f"{name}_b"] = (G,)
        shapes[f"{name}_v"] = (G,)
        shapes[f"{name}_vb"] = (1,)
    shapes["joint_W"] = (G, 4 * H)
    shapes["joint_b"] = (G,)
    shapes["know_W"] = (G, 2 * H)
    shapes["know_b"] = (G,)
    shapes["fuse_W"] = (G, 4 * H + G)
    shapes["fuse_b"] = (G,)
    shapes["out_W"] = (Z, G)
    shapes["out_b"] = (Z,)
    return shapes


def _fan_in(name: str, shapes: dict[str, tuple[int, ...]]) -> int:
    if name.endswith("_vb"):
        return shapes[name[:-1]][0]
    if name.endswith("_v"):
        return shapes[name][0]
    base = name.rsplit("_", 1)[0]
    return shapes[base + "_W"][1]


def init_params(config: ModelConfig, seed: int | None = None) -> dict[str, np.ndarray]:
    """Uniform in ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]``."""
    rng = np.random.default_rng(config.seed if seed is None else seed)
    shapes = param_shapes(config)
    params = {}
    for name, shape in shapes.items():
        bound = 1.0 / np.sqrt(_fan_in(name, shapes))
        params[name] = rng.uniform(-bound, bound, size=shape)
    return params


def check_params(params: dict[str, np.ndarray], config: ModelConfig) -> None:
    expected = param_shapes(config)
    if set(params) != set(expected):
        missing = sorted(set(expected) - set(params))
        extra = sorted(set(params) - set(expected))
        raise ConfigError(f"parameter names differ from config (missing {missing}, unexpected {extra})")
    for name, shape in expected.items():
        if params[name].shape != shape:
            raise ConfigError(f"{name}: shape {params[name].shape} does not match config {shape}")


def sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


# --------------------------------------------------------------------------
# LSTM


def lstm_forward(X: np.ndarray, mask: np.ndarray, W: np.ndarray, b: np.ndarray, reverse: bool = False):
    """One LSTM direction over right-padded inputs.

    Gate layout in ``W``/``b`` rows: input, forget, output, candidate.
    Returns per-position states ``(N, T, H)``, the final state ``(N, H)``
    and a cache for :func:`lstm_backward`.
    """
    N, T, _ = X.shape
    H = W.shape[0] // 4
    h = np.zeros((N, H))
    c = np.zeros((N, H))
    out = np.zeros((N, T, H))
    steps = range(T - 1, -1, -1) if reverse else range(T)
    cache = []
    for t in steps:
        m = mask[:, t, None]
        xh = np.concatenate([X[:, t], h], axis=1)
        z = xh @ W.T + b
        i = sigmoid(z[:, :H])
        f = sigmoid(z[:, H:2 * H])
        o = sigmoid(z[:, 2 * H:3 * H])
        g = np.tanh(z[:, 3 * H:])
        c_cand = f * c + i * g
        tc = np.tanh(c_cand)
        h_cand = o * tc
        cache.append((t, m, xh, c, i, f, o, g, tc))
        c = m * c_cand + (1.0 - m) * c
        h = m * h_cand + (1.0 - m) * h
        out[:, t] = h
    return out, h, cache


def lstm_backward(dout: np.ndarray, dfinal: np.ndarray, W: np.ndarray, cache, E: int):
    """Gradients of one direction; ``dout`` per position, ``dfinal`` on the last state."""
    H = W.shape[0] // 4
    dW = np.zeros_like(W)
    db = np.zeros(W.shape[0])
    dh_next = dfinal.copy()
    dc_next = np.zeros_like(dfinal)
    for t, m, xh, c_prev, i, f, o, g, tc in reversed(cache):
        dh = dout[:, t] + dh_next
        dh_c = m * dh
        dc_c = m * dc_next + dh_c * o * (1.0 - tc * tc)
        dz = np.concatenate(
            [
                dc_c * g * i * (1.0 - i),
                dc_c * c_prev * f * (1.0 - f),
                dh_c * tc * o * (1.0 - o),
                dc_c * i * (1.0 - g * g),
            ],
            axis=1,
        )
        dW += dz.T @ xh
        db += dz.sum(axis=0)
        dxh = dz @ W
        dh_next = dxh[:, E:] + (1.0 - m) * dh
        dc_next = dc_c * f + (1.0 - m) * dc_next
    return dW, db


def bilstm_forward(params, prefix: str, X: np.ndarray, mask: np.ndarray):
    """Per-position states ``(N, T, 2H)`` and final representation ``(N, 2H)``."""
    fw, hf, cf = lstm_forward(X, mask, params[f"{prefix}_fw_W"], params[f"{prefix}_fw_b"])
    bw, hb, cb = lstm_forward(X, mask, params[f"{prefix}_bw_W"], params[f"{prefix}_bw_b"], reverse=True)
    return np.concatenate([fw, bw], axis=2), np.concatenate([hf, hb], axis=1), (cf, cb)


def bilstm_backward(params, prefix: str, dstates, dfinal, cache, E: int, grads: dict):
    cf, cb = cache
    H = params[f"{prefix}_fw_W"].shape[0] // 4
    if dstates is None:
        dstates = np.zeros((dfinal.shape[0], len(cf), 2 * H))
    dW, db = lstm_backward(dstates[:, :, :H], dfinal[:, :H], params[f"{prefix}_fw_W"], cf, E)
    grads[f"{prefix}_fw_W"] += dW
    grads[f"{prefix}_fw_b"] += db
    dW, db = lstm_backward(dstates[:, :, H:], dfinal[:, H:], params[f"{prefix}_bw_W"], cb, E)
    grads[f"{prefix}_bw_W"] += dW
    grads[f"{prefix}_bw_b"] += db


# --------------------------------------------------------------------------
# attention


def self_attention_forward(params, prefix: str, Hs: np.ndarray, mask: np.ndarray):
    """Sigmoid-scored attention pooling.

    a = relu(W h + b); v = w_v . a + b_v; weights = sigmoid(v) normalized
    over unmasked positions. Fully masked rows pool to zero.
    """
    W, b, wv, vb = (params[f"{prefix}_{s}"] for s in ("W", "b", "v", "vb"))
    pre = Hs @ W.T + b
    a = np.maximum(pre, 0.0)
    v = a @ wv + vb[0]
    sg = sigmoid(v)
    vt = sg * mask
    s = vt.sum(axis=1)
    safe = np.where(s > 0, s, 1.0)
    weights = vt / safe[:, None]
    x = np.einsum("bt,btd->bd", weights, Hs)
    return x, weights, (Hs, mask, pre, a, sg, weights, safe)


def self_attention_backward(params, prefix: str, dx: np.ndarray, cache, grads: dict) -> np.ndarray:
    Hs, mask, pre, a, sg, weights, safe = cache
    W, wv = params[f"{prefix}_W"], params[f"{prefix}_v"]
    dHs = weights[:, :, None] * dx[:, None, :]
    dw = np.einsum("btd,bd->bt", Hs, dx)
    dvt = (dw - (dw * weights).sum(axis=1, keepdims=True)) / safe[:, None]
    dv = dvt * mask * sg * (1.0 - sg)
    grads[f"{prefix}_vb"] += dv.sum()
    grads[f"{prefix}_v"] += np.einsum("bt,btg->g", dv, a)
    dpre = dv[:, :, None] * wv * (pre > 0)
    grads[f"{prefix}_W"] += np.einsum("btg,btd->gd", dpre, Hs)
    grads[f"{prefix}_b"] += dpre.sum(axis=(0, 1))
    dHs += dpre @ W
    return dHs


def knowledge_attention_forward(params, xs: np.ndarray, K: np.ndarray, valid: np.ndarray):
    """Sentence-aware pooling of path encodings ``K`` ``(B, P, 2H)``.

    Path score = sigmoid(x_s . h_path), normalized over the valid paths of
    each row; the pooled vector goes through relu(W_k . + b_k). Rows with no
    valid path yield a zero knowledge vector.
    """
    sc = np.einsum("bpd,bd->bp", K, xs)
    sg = sigmoid(sc)
    ht = sg * valid
    s = ht.sum(axis=1)
    safe = np.where(s > 0, s, 1.0)
    weights = ht / safe[:, None]
    u = np.einsum("bp,bpd->bd", weights, K)
    pre = u @ params["know_W"].T + params["know_b"]
    has = (valid.sum(axis=1) > 0).astype(float)[:, None]
    xk = np.maximum(pre, 0.0) * has
    return xk, weights, (xs, K, valid, sg, weights, safe, u, pre, has)


def knowledge_attention_backward(params, dxk: np.ndarray, cache, grads: dict):
    xs, K, valid, sg, weights, safe, u, pre, has = cache
    dpre = dxk * has * (pre > 0)
    grads["know_W"] += dpre.T @ u
    grads["know_b"] += dpre.sum(axis=0)
    du = dpre @ params["know_W"]
    dK = weights[:, :, None] * du[:, None, :]
    dw = np.einsum("bpd,bd->bp", K, du)
    dht = (dw - (dw * weights).sum(axis=1, keepdims=True)) / safe[:, None]
    dsc = dht * valid * sg * (1.0 - sg)
    dK += dsc[:, :, None] * xs[:, None, :]
    dxs = np.einsum("bp,bpd->bd", dsc, K)
    return dxs, dK


# --------------------------------------------------------------------------
# full network


@dataclass
class ForwardTrace:
    sentence_weights: np.ndarray  # (B, Ts), zero on padding
    context_weights: np.ndarray  # (B, Tc)
    path_weights: np.ndarray  # (B, P)
    probabilities: np.ndarray  # (B, Z)
    cache: dict = field(default=None, repr=False)


def _dropout(X: np.ndarray, rate: float, rng: np.random.Generator | None) -> np.ndarray:
    if rng is None or rate <= 0.0 or X.size == 0:
        return X
    keep = rng.random(X.shape) >= rate
    return X * keep / (1.0 - rate)


def forward(
    params: dict[str, np.ndarray],
    config: ModelConfig,
    batch: Batch,
    dropout_rng: np.random.Generator | None = None,
    xk_override: np.ndarray | None = None,
) -> ForwardTrace:
    """Label probabilities for a batch.

    ``dropout_rng`` enables inverted dropout on every LSTM input (training).
    ``xk_override`` replaces the knowledge vector, bypassing the path
    encoder; an empty path list is equivalent to a zero override.
    """
    B = batch.size
    H, G = config.hidden_size, config.gate_size
    sent = _dropout(batch.sent, config.dropout, dropout_rng)
    ctx = _dropout(batch.ctx, config.dropout, dropout_rng)
    Hs, _, c_sent = bilstm_forward(params, "sent", sent, batch.sent_mask)
    xs, ws, c_att_s = self_attention_forward(params, "att_s", Hs, batch.sent_mask)
    Hc, _, c_ctx = bilstm_forward(params, "ctx", ctx, batch.ctx_mask)
    xc, wc, c_att_c = self_attention_forward(params, "att_c", Hc, batch.ctx_mask)

    P = batch.path_valid.shape[1]
    c_know = c_katt = None
    wk = np.zeros((B, P))
    if xk_override is not None:
        xk = xk_override
    elif P == 0 or not batch.path_valid.any():
        xk = np.zeros((B, G))
    else:
        paths = _dropout(batch.paths, config.dropout, dropout_rng)
        _, hk, c_know = bilstm_forward(params, "know", paths, batch.path_mask)
        K = hk.reshape(B, P, 2 * H)
        xk, wk, c_katt = knowledge_attention_forward(params, xs, K, batch.path_valid)

    joint_in = np.concatenate([xs, xc], axis=1)
    pre_y = joint_in @ params["joint_W"].T + params["joint_b"]
    y = np.maximum(pre_y, 0.0)
    fuse_in = np.concatenate([xs, xc, xk], axis=1)
    pre_o = fuse_in @ params["fuse_W"].T + params["fuse_b"]
    o = np.maximum(pre_o, 0.0)
    gated = o * y + o * xk
    logits = gated @ params["out_W"].T + params["out_b"]
    probs = sigmoid(logits)
    cache = dict(
        c_sent=c_sent, c_att_s=c_att_s, c_ctx=c_ctx, c_att_c=c_att_c, c_know=c_know, c_katt=c_katt,
        joint_in=joint_in, pre_y=pre_y, y=y, fuse_in=fuse_in, pre_o=pre_o, o=o, xk=xk, gated=gated,
        E=batch.sent.shape[2], B=B, P=P,
    )
    return ForwardTrace(ws, wc, wk, probs, cache)


def backward(params: dict[str, np.ndarray], config: ModelConfig, trace: ForwardTrace, dlogits: np.ndarray):
    """Parameter gradients given the gradient of the objective w.r.t. the logits."""
    cache = trace.cache
    H = config.hidden_size
    E, B, P = cache["E"], cache["B"], cache["P"]
    grads = {k: np.zeros_like(v) for k, v in params.items()}

    grads["out_W"] += dlogits.T @ cache["gated"]
    grads["out_b"] += dlogits.sum(axis=0)
    dg = dlogits @ params["out_W"]
    o, y, xk = cache["o"], cache["y"], cache["xk"]
    do = dg * (y + xk)
    dy = dg * o
    dxk = dg * o

    dpre_o = do * (cache["pre_o"] > 0)
    grads["fuse_W"] += dpre_o.T @ cache["fuse_in"]
    grads["fuse_b"] += dpre_o.sum(axis=0)
    dfuse = dpre_o @ params["fuse_W"]
    dxs = dfuse[:, : 2 * H].copy()
    dxc = dfuse[:, 2 * H: 4 * H].copy()
    dxk += dfuse[:, 4 * H:]

    dpre_y = dy * (cache["pre_y"] > 0)
    grads["joint_W"] += dpre_y.T @ cache["joint_in"]
    grads["joint_b"] += dpre_y.sum(axis=0)
    djoint = dpre_y @ params["joint_W"]
    dxs += djoint[:, : 2 * H]
    dxc += djoint[:, 2 * H:]

    if cache["c_katt"] is not None:
        dxs_k, dK = knowledge_attention_backward(params, dxk, cache["c_katt"], grads)
        dxs += dxs_k
        dfinal = dK.reshape(B * P, 2 * H)
        bilstm_backward(params, "know", None, dfinal, cache["c_know"], E, grads)

    dHc = self_attention_backward(params, "att_c", dxc, cache["c_att_c"], grads)
    bilstm_backward(params, "ctx", dHc, np.zeros((B, 2 * H)), cache["c_ctx"], E, grads)
    dHs = self_attention_backward(params, "att_s", dxs, cache["c_att_s"], grads)
    bilstm_backward(params, "sent", dHs, np.zeros((B, 2 * H)), cache["c_sent"], E, grads)
    return grads


# --------------------------------------------------------------------------
# objective


def class_weights(label_matrix: np.ndarray) -> np.ndarray:
    """Per-label weight 1 / (1 - exp(-sqrt(P))) from positive rates P.

    ``label_matrix`` is ``(N, Z)`` binary; P is clamped to
    ``[1e-6, 1 - 1e-6]`` first.
    """
    label_matrix = np.asarray(label_matrix, dtype=float)
    if label_matrix.ndim != 2 or label_matrix.shape[0] == 0:
        raise ValueError("need at least one training instance")
    rate = np.clip(label_matrix.mean(axis=0), CLASS_PROB_EPS, 1.0 - CLASS_PROB_EPS)
    return weight_from_rate(rate)


def weight_from_rate(rate) -> np.ndarray:
    rate = np.clip(np.asarray(rate, dtype=float), CLASS_PROB_EPS, 1.0 - CLASS_PROB_EPS)
    return 1.0 / (1.0 - np.exp(-np.sqrt(rate)))


def _negative_coef(weights: np.ndarray, mode: str) -> np.ndarray:
    if mode == "as_written":
        return 1.0 - weights
    if mode == "unit":
        return np.ones_like(weights)
    raise ValueError(f"unknown negative weighting {mode!r}")


def loss(probs, gold, weights, negative_weighting: str = "as_written") -> float:
    """Weighted binary cross entropy, summed over labels and averaged over rows.

    L = -sum_z [w_z y_z log p_z + c_z (1 - y_z) log(1 - p_z)], where the
    negative coefficient c_z is ``1 - w_z`` ("as_written") or 1 ("unit").
    Probabilities are clamped to ``[1e-7, 1 - 1e-7]``.
    """
    p = np.clip(np.atleast_2d(np.asarray(probs, dtype=float)), PROB_EPS, 1.0 - PROB_EPS)
    y = np.atleast_2d(np.asarray(gold, dtype=float))
    w = np.asarray(weights, dtype=float)
    neg = _negative_coef(w, negative_weighting)
    per_row = -(w * y * np.log(p) + neg * (1.0 - y) * np.log(1.0 - p)).sum(axis=1)
    return float(per_row.mean())


def loss_grad_logits(probs: np.ndarray, gold: np.ndarray, weights: np.ndarray, negative_weighting: str) -> np.ndarray:
    """d loss / d logits for :func:`loss` (zero where the clamp is active)."""
    B = probs.shape[0]
    neg = _negative_coef(weights, negative_weighting)
    inside = (probs > PROB_EPS) & (probs < 1.0 - PROB_EPS)
    d = -(weights * gold * (1.0 - probs) - neg * (1.0 - gold) * probs)
    return d * inside / B


def objective_and_grads(params, config: ModelConfig, batch: Batch, weights: np.ndarray, dropout_rng=None):
    trace = forward(params, config, batch, dropout_rng)
    value = loss(trace.probabilities, batch.labels, weights, config.negative_weighting)
    dlogits = loss_grad_logits(trace.probabilities, batch.labels, weights, config.negative_weighting)
    return value, backward(params, config, trace, dlogits), trace


# --------------------------------------------------------------------------
# serialization


def save_model(path: str | Path, params: dict[str, np.ndarray], config: ModelConfig, extra: dict | None = None) -> None:
    """Binary container: magic, version, JSON config block, named float64 LE tensors."""
    check_params(params, config)
    header = json.dumps({"config": config.to_dict(), "extra": extra or {}}, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(header)))
        fh.write(header)
        fh.write(struct.pack("<I", len(params)))
        for name in param_shapes(config):
            arr = params[name]
            raw = name.encode()
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_model(path: str | Path) -> tuple[dict[str, np.ndarray], ModelConfig, dict]:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[: len(MAGIC)] != MAGIC:
        raise ConfigError(f"{path}: not a model file")
    pos = len(MAGIC)
    version, hlen = struct.unpack_from("<II", data, pos)
    if version != FORMAT_VERSION:
        raise ConfigError(f"{path}: unsupported format version {version}")
    pos += 8
    header = json.loads(data[pos: pos + hlen])
    pos += hlen
    config = ModelConfig.from_dict(header["config"])
    (count,) = struct.unpack_from("<I", data, pos)
    pos += 4
    params = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", data, pos)
        pos += 2
        name = data[pos: pos + nlen].decode()
        pos += nlen
        (ndim,) = struct.unpack_from("<B", data, pos)
        pos += 1
        shape = struct.unpack_from(f"<{ndim}I", data, pos)
        pos += 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        params[name] = np.frombuffer(data, dtype="<f8", count=size, offset=pos).reshape(shape).astype(np.float64)
        pos += 8 * size
    check_params(params, config)
    return params, config, header.get("extra", {})


def encode_sequence(params, prefix: str, embedded: np.ndarray):
    """Unbatched BiLSTM: ``(n, E)`` -> states ``(n, 2H)`` and final ``(2H,)``."""
    if len(embedded) == 0:
        raise ValueError("empty sequence")
    states, final, _ = bilstm_forward(params, prefix, embedded[None], np.ones((1, len(embedded))))
    return states[0], final[0]


def self_attention(params, hidden: np.ndarray, which: str = "sentence"):
    """Unbatched sentence/context attention: returns pooled vector and weights."""
    prefix = {"sentence": "att_s", "context": "att_c"}[which]
    x, w, _ = self_attention_forward(params, prefix, hidden[None], np.ones((1, len(hidden))))
    return x[0], w[0]


def encode_paths(params, path_embeddings: Sequence[np.ndarray]) -> list[np.ndarray]:
    return [encode_sequence(params, "know", p)[1] for p in path_embeddings]


def knowledge_attention(params, xs: np.ndarray, encodings: Sequence[np.ndarray]):
    K = np.stack(encodings)[None]
    xk, w, _ = knowledge_attention_forward(params, xs[None], K, np.ones((1, len(encodings))))
    return xk[0], w[0]
