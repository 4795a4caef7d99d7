"""Central-difference verification of the analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .codeparse import EncodedPair
from .model import ModelConfig, backward, dropout_mask_for, forward, init_params, loss, make_batch

# Relative-error denominator floor. h=1e-5 central differences carry ~2e-11 of
# roundoff, so gradients below the floor are effectively compared absolutely.
REL_ERR_FLOOR = 1e-6


@dataclass
class GradCheckReport:
    max_rel_err: float
    max_abs_err: float
    coordinates: int
    probes: int
    tol: float
    passed: bool

    def to_json(self) -> dict:
        return {
            "max_rel_err": self.max_rel_err,
            "max_abs_err": self.max_abs_err,
            "coordinates": self.coordinates,
            "probes": self.probes,
            "tol": self.tol,
            "pass": self.passed,
        }


def tiny_config(**overrides) -> ModelConfig:
    base = dict(vocab_size=20, hidden_size=8, num_layers=1, num_heads=2, ffn_size=16,
                max_len=16, d_f=1, dropout_p=0.0, seed=0)
    base.update(overrides)
    return ModelConfig(**base)


def random_encoded(cfg: ModelConfig, rng: np.random.Generator) -> EncodedPair:
    """A random well-formed [CLS] a [SEP] b [SEP] PAD... sequence, with random def-use edges."""
    budget = cfg.max_len - 3
    la = int(rng.integers(0, budget + 1))
    lb = int(rng.integers(0, budget - la + 1))
    body_a = rng.integers(4, cfg.vocab_size, size=la).tolist()
    body_b = rng.integers(4, cfg.vocab_size, size=lb).tolist()
    ids = [0] + body_a + [1] + body_b + [1]
    used = len(ids)
    ids += [2] * (cfg.max_len - used)
    mask = [1] * used + [0] * (cfg.max_len - used)
    edges = []
    if used > 2:
        for _ in range(int(rng.integers(0, 4))):
            d, u = sorted(rng.choice(used, size=2, replace=False).tolist())
            edges.append((d, u))
    return EncodedPair(tuple(ids), tuple(mask), tuple(edges))


def _perturbed_params(cfg, rng):
    # move off the init point so zero biases and unit gains are exercised too
    params = init_params(replace(cfg, seed=int(rng.integers(2**31))))
    return {k: v + 0.1 * rng.standard_normal(v.shape) for k, v in params.items()}


def gradient_check(cfg: ModelConfig, seed: int = 0, n_probes: int = 20, tol: float = 1e-4,
                   coords_per_probe: int = 200, h: float = 1e-5, train: bool = False) -> GradCheckReport:
    """Compare ``backward`` with central differences on random probes.

    In train mode with dropout the mask is drawn once per probe and then held
    fixed for every loss evaluation.
    """
    rng = np.random.default_rng(seed)
    max_rel = max_abs = 0.0
    checked = 0
    for _ in range(n_probes):
        params = _perturbed_params(cfg, rng)
        batch = make_batch(random_encoded(cfg, rng), rng.random(cfg.d_f), cfg)
        label = int(rng.integers(0, 2))
        mask = None
        if train and cfg.dropout_p > 0:
            mask = dropout_mask_for(cfg, 1, rng)

        def objective():
            out = forward(params, cfg, batch, train=train, dropout_mask=mask)
            return loss(out.logits[0], label)

        out = forward(params, cfg, batch, train=train, dropout_mask=mask, keep_trace=True)
        grads = backward(params, cfg, out.trace, [label], logits=out.logits)

        names = list(params)
        sizes = np.array([params[n].size for n in names])
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        total = int(offsets[-1])
        picks = rng.choice(total, size=min(coords_per_probe, total), replace=False)
        for flat in np.sort(picks):
            j = int(np.searchsorted(offsets, flat, side="right") - 1)
            name, local = names[j], int(flat - offsets[j])
            arr = params[name].reshape(-1)
            old = arr[local]
            arr[local] = old + h
            up = objective()
            arr[local] = old - h
            down = objective()
            arr[local] = old
            numeric = (up - down) / (2 * h)
            analytic = grads[name].reshape(-1)[local]
            abs_err = abs(analytic - numeric)
            rel = abs_err / max(abs(analytic), abs(numeric), REL_ERR_FLOOR)
            max_abs = max(max_abs, abs_err)
            max_rel = max(max_rel, rel)
            checked += 1
    return GradCheckReport(float(max_rel), float(max_abs), checked, n_probes, tol,
                           bool(max_rel < tol))
