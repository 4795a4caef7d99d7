"""Small pre-norm transformer encoder with a pooled-output / feature fusion head.

Everything is float64 numpy with hand-written reverse mode. Parameters live
in a plain ``dict`` of arrays; linear weights use the ``(out, in)`` layout so
``y = x @ W.T + b``.

Head::

    pooled    = tanh(W_pool . h_cls + b_pool)            (H)
    processed = W1 . f_out + b1                          (H)
    C         = [pooled ; processed]                     (2H)
    logits    = W2 . dropout(C) + b2                     (num_labels)
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, ModelError

LN_EPS = 1e-5
_GELU_C = math.sqrt(2.0 / math.pi)


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    hidden_size: int = 64
    num_layers: int = 2
    num_heads: int = 4
    ffn_size: int = 128
    max_len: int = 256
    d_f: int = 1
    num_labels: int = 2
    dropout_p: float = 0.1
    dataflow_bias: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.vocab_size < 5:
            raise ConfigError(f"vocab_size must be at least 5, got {self.vocab_size}")
        if self.hidden_size < 1 or self.num_heads < 1 or self.hidden_size % self.num_heads:
            raise ConfigError(
                f"hidden_size {self.hidden_size} must be divisible by num_heads {self.num_heads}"
            )
        if self.num_layers < 0 or self.ffn_size < 1:
            raise ConfigError("num_layers must be >= 0 and ffn_size >= 1")
        if self.max_len < 5:
            raise ConfigError(f"max_len must be at least 5, got {self.max_len}")
        if self.d_f < 1:
            raise ConfigError(f"d_f must be at least 1, got {self.d_f}")
        if self.num_labels != 2:
            raise ConfigError(f"num_labels must be 2, got {self.num_labels}")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigError(f"dropout_p must lie in [0, 1), got {self.dropout_p}")

    @property
    def head_dim(self) -> int:
        return self.hidden_size // self.num_heads

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(f"bad model config: {exc}") from exc


def param_shapes(cfg: ModelConfig) -> dict:
    H, F = cfg.hidden_size, cfg.ffn_size
    shapes = {"tok_emb": (cfg.vocab_size, H), "pos_emb": (cfg.max_len, H)}
    for i in range(cfg.num_layers):
        p = f"layers.{i}."
        shapes.update({
            p + "ln1.g": (H,), p + "ln1.b": (H,),
            p + "attn.wq": (H, H), p + "attn.bq": (H,),
            p + "attn.wk": (H, H), p + "attn.bk": (H,),
            p + "attn.wv": (H, H), p + "attn.bv": (H,),
            p + "attn.wo": (H, H), p + "attn.bo": (H,),
            p + "ln2.g": (H,), p + "ln2.b": (H,),
            p + "ffn.w1": (F, H), p + "ffn.b1": (F,),
            p + "ffn.w2": (H, F), p + "ffn.b2": (H,),
        })
    shapes.update({
        "ln_f.g": (H,), "ln_f.b": (H,),
        "pooler.w": (H, H), "pooler.b": (H,),
        "feature.w": (H, cfg.d_f), "feature.b": (H,),
        "classifier.w": (cfg.num_labels, 2 * H), "classifier.b": (cfg.num_labels,),
    })
    if cfg.dataflow_bias:
        shapes["dataflow.bias"] = (1,)
    return shapes


def init_params(cfg: ModelConfig) -> dict:
    """Glorot-uniform matrices, zero biases, unit layer-norm gains; seeded by ``cfg.seed``."""
    rng = np.random.default_rng(cfg.seed)
    params = {}
    for name, shape in param_shapes(cfg).items():
        if len(shape) == 2:
            a = math.sqrt(6.0 / (shape[0] + shape[1]))
            params[name] = rng.uniform(-a, a, size=shape)
        elif name.endswith(".g"):
            params[name] = np.ones(shape)
        else:
            params[name] = np.zeros(shape)
    return params


def check_params(params: dict, cfg: ModelConfig) -> None:
    shapes = param_shapes(cfg)
    if set(shapes) != set(params):
        missing, extra = set(shapes) - set(params), set(params) - set(shapes)
        raise ModelError(f"parameter names mismatch (missing {sorted(missing)}, extra {sorted(extra)})")
    for name, shape in shapes.items():
        if params[name].shape != shape:
            raise ModelError(f"{name} has shape {params[name].shape}, expected {shape}")


def num_parameters(params: dict) -> int:
    return sum(v.size for v in params.values())


# --- inputs -----------------------------------------------------------------

@dataclass
class Batch:
    ids: np.ndarray           # (B, L) int
    mask: np.ndarray          # (B, L) bool
    features: np.ndarray      # (B, d_f)
    edges: np.ndarray | None  # (B, L, L) 0/1, symmetric, or None

    @property
    def size(self) -> int:
        return self.ids.shape[0]


def make_batch(encoded, features, cfg: ModelConfig | None = None) -> Batch:
    """Stack EncodedPairs (or a single one) and their feature vectors.

    ``features`` entries may be OutputFeature objects or plain sequences.
    """
    if hasattr(encoded, "input_ids"):
        encoded, features = [encoded], [features]
    encoded = list(encoded)
    feats = [getattr(f, "value", f) for f in features]
    if len(feats) != len(encoded):
        raise ModelError(f"{len(encoded)} encoded pairs but {len(feats)} feature vectors")
    ids = np.array([e.input_ids for e in encoded], dtype=np.int64)
    mask = np.array([e.attention_mask for e in encoded], dtype=bool)
    f = np.array(feats, dtype=np.float64).reshape(len(encoded), -1)
    edges = None
    if cfg is None or cfg.dataflow_bias:
        L = ids.shape[1]
        edges = np.zeros((len(encoded), L, L))
        for b, e in enumerate(encoded):
            for d, u in getattr(e, "edges", ()):
                edges[b, u, d] = 1.0
                edges[b, d, u] = 1.0
    return Batch(ids, mask, f, edges)


# --- primitives ---------------------------------------------------------------

def _layer_norm(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + LN_EPS)
    xhat = (x - mu) * rstd
    return xhat * g + b, (xhat, rstd)


def _layer_norm_back(dy, g, cache):
    xhat, rstd = cache
    lead = tuple(range(dy.ndim - 1))
    dg = (dy * xhat).sum(axis=lead)
    db = dy.sum(axis=lead)
    dxhat = dy * g
    dx = rstd * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                 - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
    return dx, dg, db


def _gelu(z):
    t = np.tanh(_GELU_C * (z + 0.044715 * z ** 3))
    return 0.5 * z * (1.0 + t), t


def _gelu_back(dy, z, t):
    dt = (1.0 - t * t) * _GELU_C * (1.0 + 3 * 0.044715 * z * z)
    return dy * (0.5 * (1.0 + t) + 0.5 * z * dt)


def _linear(x, w, b):
    return x @ w.T + b


def _linear_back(dy, x, w):
    """Return (dx, dW, db) for y = x @ w.T + b over any leading dims."""
    dy2 = dy.reshape(-1, dy.shape[-1])
    x2 = x.reshape(-1, x.shape[-1])
    return dy @ w, dy2.T @ x2, dy2.sum(axis=0)


def _split_heads(x, n):
    B, L, H = x.shape
    return x.reshape(B, L, n, H // n).transpose(0, 2, 1, 3)


def _merge_heads(x):
    B, n, L, d = x.shape
    return x.transpose(0, 2, 1, 3).reshape(B, L, n * d)


def _log_softmax(z):
    m = z.max(axis=-1, keepdims=True)
    return z - m - np.log(np.exp(z - m).sum(axis=-1, keepdims=True))


def softmax(z):
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


# --- forward / loss / backward ----------------------------------------------------

@dataclass
class ForwardTrace:
    batch: Batch
    x0: np.ndarray
    layers: list = field(default_factory=list)
    ln_f: tuple = ()
    hidden: np.ndarray | None = None
    pooled: np.ndarray | None = None
    processed: np.ndarray | None = None
    concat: np.ndarray | None = None
    dropout_mask: np.ndarray | None = None
    concat_dropped: np.ndarray | None = None


@dataclass
class ForwardOutput:
    logits: np.ndarray         # (B, 2)
    probability: np.ndarray    # (B,) softmax(logits)[:, 1]
    trace: ForwardTrace | None = None


def dropout_mask_for(cfg: ModelConfig, batch_size: int, rng: np.random.Generator) -> np.ndarray:
    """Inverted-dropout mask over the concatenated vector: entries 0 or 1/(1-p)."""
    keep = rng.random((batch_size, 2 * cfg.hidden_size)) >= cfg.dropout_p
    return keep / (1.0 - cfg.dropout_p)


def _check_finite(x, where):
    if not np.all(np.isfinite(x)):
        raise ModelError(f"non-finite activation in {where}")


def forward(params, cfg: ModelConfig, batch: Batch, train: bool = False, *,
            rng: np.random.Generator | None = None, dropout_mask=None,
            keep_trace: bool = False) -> ForwardOutput:
    """Run the encoder and fusion head on a batch.

    In train mode the dropout mask comes from ``dropout_mask`` if given,
    otherwise it is drawn from ``rng``. Eval mode never drops anything.
    """
    B, L = batch.ids.shape
    H, nh = cfg.hidden_size, cfg.num_heads
    if L != cfg.max_len:
        raise ModelError(f"encoded length {L} != max_len {cfg.max_len}")
    if batch.features.shape != (B, cfg.d_f):
        raise ModelError(f"feature batch has shape {batch.features.shape}, expected {(B, cfg.d_f)}")
    if batch.ids.min(initial=0) < 0 or batch.ids.max(initial=0) >= cfg.vocab_size:
        raise ModelError("token id outside the vocabulary")

    x = params["tok_emb"][batch.ids] + params["pos_emb"][None, :L]
    trace = ForwardTrace(batch=batch, x0=x) if keep_trace else None
    key_ok = batch.mask[:, None, None, :]
    bias = None
    if cfg.dataflow_bias and batch.edges is not None:
        bias = params["dataflow.bias"][0] * batch.edges[:, None]
    scale = 1.0 / math.sqrt(cfg.head_dim)

    for i in range(cfg.num_layers):
        p = f"layers.{i}."
        a, ln1 = _layer_norm(x, params[p + "ln1.g"], params[p + "ln1.b"])
        q = _split_heads(_linear(a, params[p + "attn.wq"], params[p + "attn.bq"]), nh)
        k = _split_heads(_linear(a, params[p + "attn.wk"], params[p + "attn.bk"]), nh)
        v = _split_heads(_linear(a, params[p + "attn.wv"], params[p + "attn.bv"]), nh)
        s = q @ k.transpose(0, 1, 3, 2) * scale
        if bias is not None:
            s = s + bias
        s = np.where(key_ok, s, -np.inf)
        s_max = s.max(axis=-1, keepdims=True)
        e = np.exp(s - s_max)
        probs = e / e.sum(axis=-1, keepdims=True)
        ctx = _merge_heads(probs @ v)
        x_mid = x + _linear(ctx, params[p + "attn.wo"], params[p + "attn.bo"])
        m, ln2 = _layer_norm(x_mid, params[p + "ln2.g"], params[p + "ln2.b"])
        z = _linear(m, params[p + "ffn.w1"], params[p + "ffn.b1"])
        gz, t = _gelu(z)
        x_out = x_mid + _linear(gz, params[p + "ffn.w2"], params[p + "ffn.b2"])
        _check_finite(x_out, f"layer {i}")
        if keep_trace:
            trace.layers.append(dict(a=a, ln1=ln1, q=q, k=k, v=v, probs=probs, ctx=ctx,
                                     m=m, ln2=ln2, z=z, gz=gz, t=t))
        x = x_out

    hidden, ln_f = _layer_norm(x, params["ln_f.g"], params["ln_f.b"])
    cls_state = hidden[:, 0]
    pooled = np.tanh(_linear(cls_state, params["pooler.w"], params["pooler.b"]))
    processed = _linear(batch.features, params["feature.w"], params["feature.b"])
    concat = np.concatenate([pooled, processed], axis=1)
    _check_finite(concat, "fusion head")

    mask = None
    if train and cfg.dropout_p > 0:
        if dropout_mask is not None:
            mask = np.asarray(dropout_mask, dtype=np.float64)
            if mask.shape != concat.shape:
                raise ModelError(f"dropout mask shape {mask.shape} != {concat.shape}")
        elif rng is not None:
            mask = dropout_mask_for(cfg, B, rng)
        else:
            raise ModelError("train-mode forward with dropout needs an rng or a fixed mask")
    dropped = concat if mask is None else concat * mask
    logits = _linear(dropped, params["classifier.w"], params["classifier.b"])
    _check_finite(logits, "classifier")

    if keep_trace:
        trace.ln_f, trace.hidden = ln_f, hidden
        trace.pooled, trace.processed, trace.concat = pooled, processed, concat
        trace.dropout_mask, trace.concat_dropped = mask, dropped
    return ForwardOutput(logits, softmax(logits)[:, 1], trace)


def loss(logits, label):
    """Softmax cross-entropy (log-sum-exp stabilised).

    With 1-D logits and a scalar label returns a float; with ``(B, 2)``
    logits and ``B`` labels returns the per-example losses.
    """
    z = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise ModelError("non-finite logits passed to loss")
    if z.ndim == 1:
        return float(-_log_softmax(z)[int(label)])
    labels = np.asarray(label, dtype=np.int64)
    return -_log_softmax(z)[np.arange(z.shape[0]), labels]


def binary_cross_entropy(prob, label) -> float:
    return -(label * math.log(prob) + (1 - label) * math.log(1 - prob))


def backward(params, cfg: ModelConfig, trace: ForwardTrace | None, labels,
             logits=None, reduction: str = "mean") -> dict:
    """Exact gradients of the (mean or summed) cross-entropy w.r.t. every parameter."""
    if trace is None:
        raise ModelError("backward needs the trace of a forward pass run with keep_trace=True")
    batch = trace.batch
    B, L = batch.ids.shape
    nh = cfg.num_heads
    labels = np.asarray(labels, dtype=np.int64).reshape(B)
    if logits is None:
        logits = _linear(trace.concat_dropped, params["classifier.w"], params["classifier.b"])
    weight = 1.0 / B if reduction == "mean" else 1.0
    if reduction not in ("mean", "sum"):
        raise ValueError(f"reduction must be 'mean' or 'sum', got {reduction!r}")

    grads = {name: np.zeros_like(v) for name, v in params.items()}
    dlogits = softmax(logits)
    dlogits[np.arange(B), labels] -= 1.0
    dlogits *= weight

    d_dropped, grads["classifier.w"], grads["classifier.b"] = _linear_back(
        dlogits, trace.concat_dropped, params["classifier.w"])
    d_concat = d_dropped if trace.dropout_mask is None else d_dropped * trace.dropout_mask
    H = cfg.hidden_size
    d_pooled, d_processed = d_concat[:, :H], d_concat[:, H:]

    _, grads["feature.w"], grads["feature.b"] = _linear_back(
        d_processed, batch.features, params["feature.w"])
    d_pre = d_pooled * (1.0 - trace.pooled ** 2)
    d_cls, grads["pooler.w"], grads["pooler.b"] = _linear_back(
        d_pre, trace.hidden[:, 0], params["pooler.w"])
    d_hidden = np.zeros_like(trace.hidden)
    d_hidden[:, 0] = d_cls
    dx, grads["ln_f.g"], grads["ln_f.b"] = _layer_norm_back(d_hidden, params["ln_f.g"], trace.ln_f)

    scale = 1.0 / math.sqrt(cfg.head_dim)
    use_bias = cfg.dataflow_bias and batch.edges is not None
    for i in reversed(range(cfg.num_layers)):
        p = f"layers.{i}."
        c = trace.layers[i]
        # feed-forward block
        d_gz, grads[p + "ffn.w2"], grads[p + "ffn.b2"] = _linear_back(dx, c["gz"], params[p + "ffn.w2"])
        d_z = _gelu_back(d_gz, c["z"], c["t"])
        d_m, grads[p + "ffn.w1"], grads[p + "ffn.b1"] = _linear_back(d_z, c["m"], params[p + "ffn.w1"])
        d_mid, grads[p + "ln2.g"], grads[p + "ln2.b"] = _layer_norm_back(d_m, params[p + "ln2.g"], c["ln2"])
        dx = dx + d_mid
        # attention block
        d_ctx, grads[p + "attn.wo"], grads[p + "attn.bo"] = _linear_back(dx, c["ctx"], params[p + "attn.wo"])
        d_ctx = _split_heads(d_ctx, nh)
        probs = c["probs"]
        d_probs = d_ctx @ c["v"].transpose(0, 1, 3, 2)
        d_v = probs.transpose(0, 1, 3, 2) @ d_ctx
        d_s = probs * (d_probs - (d_probs * probs).sum(axis=-1, keepdims=True))
        if use_bias:
            grads["dataflow.bias"] += (d_s * batch.edges[:, None]).sum()
        d_q = d_s @ c["k"] * scale
        d_k = d_s.transpose(0, 1, 3, 2) @ c["q"] * scale
        d_a = np.zeros_like(c["a"])
        for name, d_proj in (("q", d_q), ("k", d_k), ("v", d_v)):
            d_in, grads[p + f"attn.w{name}"], grads[p + f"attn.b{name}"] = _linear_back(
                _merge_heads(d_proj), c["a"], params[p + f"attn.w{name}"])
            d_a += d_in
        d_in, grads[p + "ln1.g"], grads[p + "ln1.b"] = _layer_norm_back(d_a, params[p + "ln1.g"], c["ln1"])
        dx = dx + d_in

    np.add.at(grads["tok_emb"], batch.ids, dx)
    grads["pos_emb"][:L] += dx.sum(axis=0)
    return grads


def predict(params, cfg: ModelConfig, batch: Batch):
    """Eval-mode probabilities and 0/1 labels (threshold 0.5, inclusive)."""
    out = forward(params, cfg, batch, train=False)
    return out.probability, (out.probability >= 0.5).astype(np.int64)


def label_from_probability(prob) -> int:
    return int(prob >= 0.5)
