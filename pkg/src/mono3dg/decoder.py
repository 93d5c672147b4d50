"""Desk-scale token decoder: query substitution, self-attention stack,
regression heads, L1 loss, hand-written backprop, and Adam training.

The sequence carries caption/image tokens followed by a pos marker and a
query slot; the slot's embedding is replaced by a learnable query vector
whose final hidden state feeds four small MLP heads (center projection,
sizes, virtual depth, 6D rotation). Layers are causal single-head
self-attention + feed-forward, both with residual connections and no
normalization, so gradients stay exactly checkable against finite
differences.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.special import erf

from .errors import EmptyDataset, MalformedSequence, ShapeMismatch
from .jsonio import dumps_canonical, loads_strict
from .rotation import Rot6D

KIND_CAPTION = "caption"
KIND_IMAGE = "image"
KIND_POS = "pos_marker"
KIND_QUERY = "query_slot"

_MASK_VALUE = -1e30


@dataclass(frozen=True)
class TokenSequence:
    """Embedded tokens (seq_len, d_model) with per-position kind tags.

    The tail must be exactly [pos_marker, query_slot], and those kinds may
    not appear anywhere else.
    """

    embeddings: np.ndarray
    kinds: tuple

    def __post_init__(self):
        emb = np.asarray(self.embeddings, dtype=float)
        object.__setattr__(self, "embeddings", emb)
        object.__setattr__(self, "kinds", tuple(self.kinds))
        if emb.ndim != 2 or emb.shape[0] != len(self.kinds):
            raise MalformedSequence(
                f"embeddings {emb.shape} do not match {len(self.kinds)} kind tags"
            )
        if not np.all(np.isfinite(emb)):
            raise MalformedSequence("embeddings contain non-finite values")
        if self.kinds.count(KIND_POS) != 1 or self.kinds.count(KIND_QUERY) != 1:
            raise MalformedSequence("sequence must contain exactly one pos_marker and one query_slot")
        if self.kinds[-2:] != (KIND_POS, KIND_QUERY):
            raise MalformedSequence("pos_marker must immediately precede the query_slot at the tail")

    @property
    def query_position(self) -> int:
        return len(self.kinds) - 1


@dataclass(frozen=True)
class RawHeadOutput:
    """The regression quantities the geometry stage consumes."""

    u_norm: float
    v_norm: float
    d_v: float
    L: float
    W: float
    H: float
    rot6d: Rot6D


def raw_to_vector(raw: RawHeadOutput) -> np.ndarray:
    return np.concatenate(
        [
            np.array([raw.u_norm, raw.v_norm, raw.d_v, raw.L, raw.W, raw.H]),
            raw.rot6d.as_array(),
        ]
    )


def vector_to_raw(vec: np.ndarray) -> RawHeadOutput:
    vec = np.asarray(vec, dtype=float).reshape(12)
    return RawHeadOutput(
        u_norm=float(vec[0]),
        v_norm=float(vec[1]),
        d_v=float(vec[2]),
        L=float(vec[3]),
        W=float(vec[4]),
        H=float(vec[5]),
        rot6d=Rot6D.from_array(vec[6:]),
    )


# -- parameters ---------------------------------------------------------------


@dataclass
class MLPParams:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray


@dataclass
class LayerParams:
    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    w_o: np.ndarray
    ff_w1: np.ndarray
    ff_b1: np.ndarray
    ff_w2: np.ndarray
    ff_b2: np.ndarray


@dataclass
class DecoderConfig:
    d_model: int = 32
    n_layers: int = 2
    d_ff: int = 64
    head_hidden: int = 32

    def to_json(self) -> dict:
        return {
            "d_model": self.d_model,
            "n_layers": self.n_layers,
            "d_ff": self.d_ff,
            "head_hidden": self.head_hidden,
        }

    @staticmethod
    def from_json(obj: dict) -> "DecoderConfig":
        return DecoderConfig(
            d_model=int(obj["d_model"]),
            n_layers=int(obj["n_layers"]),
            d_ff=int(obj["d_ff"]),
            head_hidden=int(obj["head_hidden"]),
        )


_HEAD_DIMS = {"uv": 2, "lwh": 3, "d": 1, "rot": 6}


@dataclass
class DecoderParams:
    config: DecoderConfig
    layers: list
    heads: dict
    query: np.ndarray

    def named_arrays(self):
        """Deterministic (name, array) iteration over every parameter."""
        yield "query", self.query
        for i, layer in enumerate(self.layers):
            for name in ("w_q", "w_k", "w_v", "w_o", "ff_w1", "ff_b1", "ff_w2", "ff_b2"):
                yield f"layer{i}.{name}", getattr(layer, name)
        for head in sorted(self.heads):
            mlp = self.heads[head]
            for name in ("w1", "b1", "w2", "b2"):
                yield f"head_{head}.{name}", getattr(mlp, name)

    def set_named(self, name: str, value: np.ndarray) -> None:
        if name == "query":
            self.query = value
            return
        owner, attr = name.split(".")
        if owner.startswith("layer"):
            setattr(self.layers[int(owner[5:])], attr, value)
        else:
            setattr(self.heads[owner[len("head_"):]], attr, value)

    def copy(self) -> "DecoderParams":
        out = DecoderParams(
            config=replace(self.config),
            layers=[LayerParams(**{k: getattr(l, k).copy() for k in l.__dataclass_fields__}) for l in self.layers],
            heads={k: MLPParams(v.w1.copy(), v.b1.copy(), v.w2.copy(), v.b2.copy()) for k, v in self.heads.items()},
            query=self.query.copy(),
        )
        return out


def init_params(config: DecoderConfig, rng: np.random.Generator) -> DecoderParams:
    d, h = config.d_model, config.head_hidden
    scale = 0.1

    def mat(rows, cols):
        return scale * rng.standard_normal((rows, cols))

    layers = [
        LayerParams(
            w_q=mat(d, d),
            w_k=mat(d, d),
            w_v=mat(d, d),
            w_o=mat(d, d),
            ff_w1=mat(d, config.d_ff),
            ff_b1=np.zeros(config.d_ff),
            ff_w2=mat(config.d_ff, d),
            ff_b2=np.zeros(d),
        )
        for _ in range(config.n_layers)
    ]
    heads = {
        name: MLPParams(w1=mat(d, h), b1=np.zeros(h), w2=mat(h, out), b2=np.zeros(out))
        for name, out in _HEAD_DIMS.items()
    }
    return DecoderParams(config=config, layers=layers, heads=heads, query=scale * rng.standard_normal(d))


# -- activations ---------------------------------------------------------------


def gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + erf(x / math.sqrt(2.0)))


def gelu_grad(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + erf(x / math.sqrt(2.0))) + x * np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


# -- forward -------------------------------------------------------------------


def substitute_query(seq: TokenSequence, query: np.ndarray) -> TokenSequence:
    """Overwrite the query slot's embedding with the learnable query vector."""
    query = np.asarray(query, dtype=float)
    if query.shape != (seq.embeddings.shape[1],):
        raise ShapeMismatch(f"query vector {query.shape} vs d_model {seq.embeddings.shape[1]}")
    emb = seq.embeddings.copy()
    emb[seq.query_position] = query
    return TokenSequence(emb, seq.kinds)


def _layer_forward(x: np.ndarray, layer: LayerParams):
    d = x.shape[1]
    q = x @ layer.w_q
    k = x @ layer.w_k
    v = x @ layer.w_v
    logits = q @ k.T / math.sqrt(d)
    mask = np.triu(np.ones(logits.shape, dtype=bool), k=1)
    logits = np.where(mask, _MASK_VALUE, logits)
    logits = logits - logits.max(axis=1, keepdims=True)
    attn = np.exp(logits)
    attn /= attn.sum(axis=1, keepdims=True)
    summary = attn @ v
    attended = x + summary @ layer.w_o
    pre_act = attended @ layer.ff_w1 + layer.ff_b1
    hidden = gelu(pre_act)
    out = attended + hidden @ layer.ff_w2 + layer.ff_b2
    cache = (x, q, k, v, attn, summary, attended, pre_act, hidden)
    return out, cache


def _stack_forward(seq: TokenSequence, params: DecoderParams):
    if seq.embeddings.shape[1] != params.config.d_model:
        raise ShapeMismatch(
            f"sequence d_model {seq.embeddings.shape[1]} vs config {params.config.d_model}"
        )
    x = seq.embeddings
    caches = []
    for layer in params.layers:
        x, cache = _layer_forward(x, layer)
        caches.append(cache)
    return x, caches


def forward(seq: TokenSequence, params: DecoderParams) -> np.ndarray:
    """Run the decoder stack; returns the query position's final hidden state."""
    x, _ = _stack_forward(seq, params)
    return x[seq.query_position].copy()


def _head_forward(f3d: np.ndarray, mlp: MLPParams):
    pre = f3d @ mlp.w1 + mlp.b1
    hidden = gelu(pre)
    z = hidden @ mlp.w2 + mlp.b2
    return z, (pre, hidden)


def heads(f3d: np.ndarray, params: DecoderParams) -> RawHeadOutput:
    """Regress all geometric quantities from the single 3D feature vector."""
    f3d = np.asarray(f3d, dtype=float)
    z_uv, _ = _head_forward(f3d, params.heads["uv"])
    z_lwh, _ = _head_forward(f3d, params.heads["lwh"])
    z_d, _ = _head_forward(f3d, params.heads["d"])
    z_rot, _ = _head_forward(f3d, params.heads["rot"])
    uv = _sigmoid(z_uv)
    lwh = _softplus(z_lwh)
    d_v = _softplus(z_d)
    return RawHeadOutput(
        u_norm=float(uv[0]),
        v_norm=float(uv[1]),
        d_v=float(d_v[0]),
        L=float(lwh[0]),
        W=float(lwh[1]),
        H=float(lwh[2]),
        rot6d=Rot6D.from_array(z_rot),
    )


def predict(seq: TokenSequence, params: DecoderParams) -> RawHeadOutput:
    return heads(forward(substitute_query(seq, params.query), params), params)


def loss(raw: RawHeadOutput, target: RawHeadOutput) -> float:
    """Unit-weight L1 over all twelve regressed components."""
    return float(np.abs(raw_to_vector(raw) - raw_to_vector(target)).sum())


# -- backward ------------------------------------------------------------------


def _zeros_like_params(params: DecoderParams) -> DecoderParams:
    grads = params.copy()
    for name, arr in grads.named_arrays():
        grads.set_named(name, np.zeros_like(arr))
    return grads


def backward(seq: TokenSequence, params: DecoderParams, target: RawHeadOutput):
    """Loss and analytic gradients for every parameter, query included.

    The query substitution is applied internally, so the gradient that lands
    on the query slot's input embedding is the query gradient.
    """
    sub = substitute_query(seq, params.query)
    x_final, caches = _stack_forward(sub, params)
    pos = sub.query_position
    f3d = x_final[pos]

    head_caches = {}
    zs = {}
    for name in _HEAD_DIMS:
        zs[name], head_caches[name] = _head_forward(f3d, params.heads[name])
    uv = _sigmoid(zs["uv"])
    lwh = _softplus(zs["lwh"])
    d_v = _softplus(zs["d"])
    pred_vec = np.concatenate([[uv[0], uv[1], d_v[0]], lwh, zs["rot"]])
    target_vec = raw_to_vector(target)
    diff = pred_vec - target_vec
    loss_value = float(np.abs(diff).sum())
    d_pred = np.sign(diff)

    # squash derivatives back to head pre-activations
    dz = {
        "uv": d_pred[0:2] * uv * (1.0 - uv),
        "d": d_pred[2:3] * _sigmoid(zs["d"]),
        "lwh": d_pred[3:6] * _sigmoid(zs["lwh"]),
        "rot": d_pred[6:12],
    }

    grads = _zeros_like_params(params)
    g_f3d = np.zeros_like(f3d)
    for name in _HEAD_DIMS:
        mlp = params.heads[name]
        g = grads.heads[name]
        pre, hidden = head_caches[name]
        g.b2 += dz[name]
        g.w2 += np.outer(hidden, dz[name])
        d_hidden = mlp.w2 @ dz[name]
        d_pre = d_hidden * gelu_grad(pre)
        g.b1 += d_pre
        g.w1 += np.outer(f3d, d_pre)
        g_f3d += mlp.w1 @ d_pre

    g_x = np.zeros_like(x_final)
    g_x[pos] = g_f3d
    d = params.config.d_model
    for layer, g_layer, cache in zip(
        reversed(params.layers), reversed(grads.layers), reversed(caches)
    ):
        x, q, k, v, attn, summary, attended, pre_act, hidden = cache
        # feed-forward branch
        g_layer.ff_b2 += g_x.sum(axis=0)
        g_layer.ff_w2 += hidden.T @ g_x
        d_hidden = g_x @ layer.ff_w2.T
        d_pre = d_hidden * gelu_grad(pre_act)
        g_layer.ff_b1 += d_pre.sum(axis=0)
        g_layer.ff_w1 += attended.T @ d_pre
        g_attended = g_x + d_pre @ layer.ff_w1.T
        # attention branch
        g_layer.w_o += summary.T @ g_attended
        d_summary = g_attended @ layer.w_o.T
        d_attn = d_summary @ v.T
        d_v_mat = attn.T @ d_summary
        d_logits = attn * (d_attn - np.sum(d_attn * attn, axis=1, keepdims=True))
        d_logits /= math.sqrt(d)
        d_q = d_logits @ k
        d_k = d_logits.T @ q
        g_layer.w_q += x.T @ d_q
        g_layer.w_k += x.T @ d_k
        g_layer.w_v += x.T @ d_v_mat
        g_x = g_attended + d_q @ layer.w_q.T + d_k @ layer.w_k.T + d_v_mat @ layer.w_v.T

    grads.query = g_x[pos].copy()
    return loss_value, grads


# -- training ------------------------------------------------------------------


@dataclass
class TrainConfig:
    epochs: int = 500
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 16
    seed: int = 0


@dataclass
class AdamState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def _adam_step(params: DecoderParams, grads: dict, state: AdamState, cfg: TrainConfig):
    state.step += 1
    t = state.step
    for name, arr in params.named_arrays():
        g = grads[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(arr)
            state.v[name] = np.zeros_like(arr)
        state.m[name] = cfg.beta1 * state.m[name] + (1 - cfg.beta1) * g
        state.v[name] = cfg.beta2 * state.v[name] + (1 - cfg.beta2) * g * g
        m_hat = state.m[name] / (1 - cfg.beta1**t)
        v_hat = state.v[name] / (1 - cfg.beta2**t)
        params.set_named(name, arr - cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps))


def train(dataset: list, params: DecoderParams, cfg: TrainConfig):
    """Adam-train on (TokenSequence, RawHeadOutput target) pairs.

    Deterministic given cfg.seed. Returns the trained parameters and the
    per-epoch mean training loss.
    """
    if not dataset:
        raise EmptyDataset("training requires at least one sample")
    params = params.copy()
    rng = np.random.default_rng(cfg.seed)
    state = AdamState()
    history = []
    n = len(dataset)
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        sample_losses = np.zeros(n)
        for start in range(0, n, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            grad_sums: dict = {}
            for idx in batch:
                seq, target = dataset[idx]
                sample_loss, sample_grads = backward(seq, params, target)
                sample_losses[idx] = sample_loss
                for name, arr in sample_grads.named_arrays():
                    if name in grad_sums:
                        grad_sums[name] += arr
                    else:
                        grad_sums[name] = arr.copy()
            inv = 1.0 / len(batch)
            for name in grad_sums:
                grad_sums[name] *= inv
            _adam_step(params, grad_sums, state, cfg)
        # summed in sample order so the history is shuffle-independent
        history.append(float(sample_losses.sum()) / n)
    return params, history


# -- checkpoints ---------------------------------------------------------------


def save_checkpoint(path: str | Path, params: DecoderParams, seed: int) -> None:
    payload = {
        "config": params.config.to_json(),
        "seed": seed,
        "params": {name: arr.tolist() for name, arr in params.named_arrays()},
    }
    Path(path).write_text(dumps_canonical(payload) + "\n", encoding="utf-8")


def load_checkpoint(path: str | Path) -> DecoderParams:
    payload = loads_strict(Path(path).read_text(encoding="utf-8"))
    config = DecoderConfig.from_json(payload["config"])
    params = init_params(config, np.random.default_rng(0))
    for name, arr in params.named_arrays():
        params.set_named(name, np.asarray(payload["params"][name], dtype=float).reshape(arr.shape))
    return params


def write_loss_history(path: str | Path, history: list) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "mean_loss"])
        for epoch, value in enumerate(history):
            writer.writerow([epoch, format(value, ".17g")])
