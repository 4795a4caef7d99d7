"""Training loop, model selection and the multi-run experiment protocol."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .codeparse import encode_pair, extract_dataflow, lex
from .corpus import SplitSpec, attach_features, split_dataset
from .errors import ConfigError, TrainingError
from .evalx import Metrics, compute_metrics
from .model import ModelConfig, backward, forward, init_params, loss, make_batch

log = logging.getLogger(__name__)

EVAL_BATCH = 64


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 16
    learning_rate: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    seed: int = 0
    num_runs: int = 1
    use_feature: bool = True
    fallback: float = 0.5

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.num_runs < 1:
            raise ConfigError(f"num_runs must be >= 1, got {self.num_runs}")

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(f"bad train config: {exc}") from exc


@dataclass(frozen=True)
class Example:
    key: str
    encoded: object
    feature: tuple
    label: int


def build_examples(pairs, manifest, vocab, max_len: int, with_dataflow: bool = False) -> list:
    """Encode each pair as ``[CLS] a [SEP] b [SEP]``; fragments are lexed once."""
    frags = manifest.by_id()
    cache: dict = {}

    def tokens_of(frag_id):
        if frag_id not in cache:
            toks = lex(frags[frag_id].source)
            edges = extract_dataflow(toks) if with_dataflow else ()
            cache[frag_id] = (toks, edges)
        return cache[frag_id]

    out = []
    for p in pairs:
        ta, ea = tokens_of(p.id_a)
        tb, eb = tokens_of(p.id_b)
        enc = encode_pair(ta, tb, vocab, max_len, ea, eb)
        out.append(Example(p.key, enc, tuple(p.out_feature), p.label))
    return out


@dataclass
class RunHistory:
    train_loss: list = field(default_factory=list)
    val_metrics: list = field(default_factory=list)
    selected_epoch: int | None = None
    test_metrics: Metrics | None = None

    def to_json(self) -> dict:
        return {
            "train_loss": list(self.train_loss),
            "val_metrics": [m.to_json() if m is not None else None for m in self.val_metrics],
            "selected_epoch": self.selected_epoch,
            "test_metrics": self.test_metrics.to_json() if self.test_metrics else None,
        }


@dataclass
class TrainResult:
    params: dict
    history: RunHistory


def _features(examples, train_cfg: TrainConfig, d_f: int):
    if train_cfg.use_feature:
        return [ex.feature for ex in examples]
    return [(train_cfg.fallback,) * d_f for _ in examples]


def predict_examples(params, cfg: ModelConfig, examples, train_cfg: TrainConfig) -> np.ndarray:
    probs = []
    for start in range(0, len(examples), EVAL_BATCH):
        chunk = examples[start:start + EVAL_BATCH]
        batch = make_batch([ex.encoded for ex in chunk], _features(chunk, train_cfg, cfg.d_f), cfg)
        probs.append(forward(params, cfg, batch, train=False).probability)
    return np.concatenate(probs) if probs else np.zeros(0)


def evaluate(params, cfg: ModelConfig, examples, train_cfg: TrainConfig) -> Metrics:
    probs = predict_examples(params, cfg, examples, train_cfg)
    return compute_metrics(zip(probs.tolist(), [ex.label for ex in examples]))


class Adam:
    def __init__(self, params: dict, cfg: TrainConfig):
        self.cfg = cfg
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict) -> None:
        c = self.cfg
        self.t += 1
        corr1 = 1.0 - c.beta1 ** self.t
        corr2 = 1.0 - c.beta2 ** self.t
        for name in params:  # fixed key order keeps updates bit-reproducible
            g = grads[name]
            if c.weight_decay:
                g = g + c.weight_decay * params[name]
            self.m[name] = c.beta1 * self.m[name] + (1 - c.beta1) * g
            self.v[name] = c.beta2 * self.v[name] + (1 - c.beta2) * g * g
            step = c.learning_rate * (self.m[name] / corr1) / (np.sqrt(self.v[name] / corr2) + c.eps)
            params[name] -= step


def train_model(train, val, test, model_cfg: ModelConfig, train_cfg: TrainConfig) -> TrainResult:
    """Adam over reshuffled mini-batches; keep the epoch with the best validation f-measure.

    Ties go to the earliest epoch. With an empty validation split the epoch
    with the lowest training loss is kept instead. ``epochs=0`` returns the
    initial parameters.
    """
    if not train:
        raise TrainingError("training split is empty")
    params = init_params(model_cfg)
    best = {k: v.copy() for k, v in params.items()}
    history = RunHistory()
    opt = Adam(params, train_cfg)
    best_score = None
    n = len(train)

    for epoch in range(train_cfg.epochs):
        order = np.random.default_rng([train_cfg.seed, epoch]).permutation(n)
        total = 0.0
        for b, start in enumerate(range(0, n, train_cfg.batch_size)):
            chunk = [train[i] for i in order[start:start + train_cfg.batch_size]]
            batch = make_batch([ex.encoded for ex in chunk],
                               _features(chunk, train_cfg, model_cfg.d_f), model_cfg)
            labels = [ex.label for ex in chunk]
            rng = np.random.default_rng([train_cfg.seed, epoch, b])
            out = forward(params, model_cfg, batch, train=True, rng=rng, keep_trace=True)
            losses = loss(out.logits, labels)
            if not np.all(np.isfinite(losses)):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, batch {b} "
                    f"(pairs {[ex.key for ex in chunk]}, logits {out.logits.tolist()})"
                )
            total += float(losses.sum())
            grads = backward(params, model_cfg, out.trace, labels, logits=out.logits)
            opt.step(params, grads)
        epoch_loss = total / n
        history.train_loss.append(epoch_loss)
        val_m = evaluate(params, model_cfg, val, train_cfg) if val else None
        history.val_metrics.append(val_m)
        score = val_m.f_measure if val_m is not None else -epoch_loss
        if best_score is None or score > best_score:
            best_score = score
            history.selected_epoch = epoch
            best = {k: v.copy() for k, v in params.items()}
        log.debug("epoch %d loss %.6f val_f %s", epoch, epoch_loss,
                  None if val_m is None else round(val_m.f_measure, 6))

    if test:
        history.test_metrics = evaluate(best, model_cfg, test, train_cfg)
    return TrainResult(best, history)


@dataclass
class RunRecord:
    seed: int
    history: RunHistory
    params: dict | None = None

    def to_json(self) -> dict:
        return {"seed": self.seed, "history": self.history.to_json(),
                "test_metrics": self.history.test_metrics.to_json() if self.history.test_metrics else None}


@dataclass
class ExperimentResult:
    runs: list
    mean: dict
    std: dict
    config: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "config": self.config,
            "runs": [r.to_json() for r in self.runs],
            "aggregate": {"mean": self.mean, "std": self.std},
        }


def aggregate(metrics: list) -> tuple[dict, dict]:
    """Arithmetic mean and population standard deviation per metric."""
    mean, std = {}, {}
    for name in ("precision", "recall", "f_measure"):
        vals = np.array([getattr(m, name) for m in metrics], dtype=np.float64)
        mean[name] = float(vals.mean())
        std[name] = float(vals.std())
    return mean, std


def run_experiment(manifest, features, vocab, model_cfg: ModelConfig, train_cfg: TrainConfig,
                   split: SplitSpec = SplitSpec(), keep_params: bool = False) -> ExperimentResult:
    """Repeat split/init/train/test ``num_runs`` times with seed ``base + i`` for run ``i``."""
    pairs = attach_features(manifest.pairs, features or {})
    model_cfg = replace(model_cfg, vocab_size=vocab.size)
    examples = build_examples(pairs, manifest, vocab, model_cfg.max_len, model_cfg.dataflow_bias)
    by_key = {ex.key: ex for ex in examples}

    runs = []
    for i in range(train_cfg.num_runs):
        seed = train_cfg.seed + i
        tr, va, te = split_dataset(pairs, replace(split, seed=seed))
        result = train_model(
            [by_key[p.key] for p in tr], [by_key[p.key] for p in va], [by_key[p.key] for p in te],
            replace(model_cfg, seed=seed), replace(train_cfg, seed=seed),
        )
        if result.history.test_metrics is None:
            raise TrainingError("test split is empty; cannot report metrics")
        log.info("run %d seed %d test f %.4f", i, seed, result.history.test_metrics.f_measure)
        runs.append(RunRecord(seed, result.history, result.params if keep_params else None))

    mean, std = aggregate([r.history.test_metrics for r in runs])
    config = {"model": model_cfg.to_dict(), "train": asdict(train_cfg), "split": asdict(split)}
    return ExperimentResult(runs, mean, std, config)
