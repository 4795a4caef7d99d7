import numpy as np
import pytest

from clonefuse import train as train_mod
from clonefuse.codeparse import build_vocab
from clonefuse.corpus import SplitSpec, attach_features, synthetic_corpus
from clonefuse.errors import ConfigError, TrainingError
from clonefuse.evalx import metrics_from_counts
from clonefuse.model import ModelConfig, init_params, num_parameters
from clonefuse.train import (
    TrainConfig, aggregate, build_examples, run_experiment, train_model,
)


@pytest.fixture(scope="module")
def synthetic():
    manifest, features = synthetic_corpus(120, seed=11)
    vocab = build_vocab(manifest, 1024)
    return manifest, features, vocab


def model_cfg(vocab, **kw):
    base = dict(vocab_size=vocab.size, hidden_size=16, num_layers=1, num_heads=2, ffn_size=32,
                max_len=48, dropout_p=0.1, seed=0)
    base.update(kw)
    return ModelConfig(**base)


def splits(manifest, features, vocab, cfg, seed=0):
    from clonefuse.corpus import split_dataset
    pairs = attach_features(manifest.pairs, features)
    tr, va, te = split_dataset(pairs, SplitSpec(seed=seed))
    mk = lambda ps: build_examples(ps, manifest, vocab, cfg.max_len)
    return mk(tr), mk(va), mk(te)


def test_train_config_validation():
    for kw in (dict(epochs=-1), dict(batch_size=0), dict(learning_rate=0), dict(num_runs=0)):
        with pytest.raises(ConfigError):
            TrainConfig(**kw)


def test_zero_epochs_returns_initial_params(synthetic):
    manifest, features, vocab = synthetic
    cfg = model_cfg(vocab)
    tr, va, te = splits(manifest, features, vocab, cfg)
    result = train_model(tr, va, te, cfg, TrainConfig(epochs=0))
    init = init_params(cfg)
    assert all(np.array_equal(result.params[k], init[k]) for k in init)
    assert result.history.selected_epoch is None and result.history.train_loss == []


def test_training_is_deterministic(synthetic):
    manifest, features, vocab = synthetic
    cfg = model_cfg(vocab)
    tr, va, te = splits(manifest, features, vocab, cfg)
    tcfg = TrainConfig(epochs=3, learning_rate=1e-2, seed=5)
    a = train_model(tr, va, te, cfg, tcfg)
    b = train_model(tr, va, te, cfg, tcfg)
    assert a.history.to_json() == b.history.to_json()
    assert all(np.array_equal(a.params[k], b.params[k]) for k in a.params)


def test_feature_alone_separates_synthetic_task(synthetic):
    manifest, features, vocab = synthetic
    cfg = model_cfg(vocab)
    tr, va, te = splits(manifest, features, vocab, cfg)
    result = train_model(tr, va, te, cfg, TrainConfig(epochs=20, learning_rate=1e-2))
    assert min(result.history.train_loss) < 0.1


def test_selection_uses_best_validation_epoch(synthetic):
    manifest, features, vocab = synthetic
    cfg = model_cfg(vocab)
    tr, va, te = splits(manifest, features, vocab, cfg)
    hist = train_model(tr, va, te, cfg, TrainConfig(epochs=6, learning_rate=1e-2)).history
    fs = [m.f_measure for m in hist.val_metrics]
    assert hist.selected_epoch == fs.index(max(fs))


def test_selected_params_reproduce_reported_test_metrics(synthetic):
    manifest, features, vocab = synthetic
    cfg = model_cfg(vocab)
    tr, va, te = splits(manifest, features, vocab, cfg)
    tcfg = TrainConfig(epochs=5, learning_rate=1e-2)
    result = train_model(tr, va, te, cfg, tcfg)
    assert train_mod.evaluate(result.params, cfg, te, tcfg) == result.history.test_metrics


def test_empty_validation_selects_lowest_train_loss(synthetic):
    manifest, features, vocab = synthetic
    cfg = model_cfg(vocab)
    tr, _, te = splits(manifest, features, vocab, cfg)
    hist = train_model(tr, [], te, cfg, TrainConfig(epochs=4, learning_rate=1e-2)).history
    assert hist.selected_epoch == int(np.argmin(hist.train_loss))


def test_empty_train_split_rejected(synthetic):
    _, _, vocab = synthetic
    with pytest.raises(TrainingError):
        train_model([], [], [], model_cfg(vocab), TrainConfig())


def test_non_finite_loss_aborts(synthetic, monkeypatch):
    manifest, features, vocab = synthetic
    cfg = model_cfg(vocab)
    tr, va, te = splits(manifest, features, vocab, cfg)
    monkeypatch.setattr(train_mod, "loss", lambda logits, labels: np.full(len(labels), np.nan))
    with pytest.raises(TrainingError, match="epoch 0, batch 0"):
        train_model(tr, va, te, cfg, TrainConfig(epochs=1))


def test_no_feature_ablation_changes_only_inputs(synthetic, monkeypatch):
    manifest, features, vocab = synthetic
    cfg = model_cfg(vocab)
    tr, va, te = splits(manifest, features, vocab, cfg)
    seen = []
    real = train_mod.make_batch

    def spy(encoded, feats, c=None):
        seen.append([tuple(f) for f in feats])
        return real(encoded, feats, c)

    monkeypatch.setattr(train_mod, "make_batch", spy)
    result = train_model(tr, va, te, cfg, TrainConfig(epochs=1, use_feature=False))
    assert all(f == (0.5,) for batch in seen for f in batch)
    assert num_parameters(result.params) == num_parameters(init_params(cfg))


def test_aggregate_population_std():
    m1 = metrics_from_counts(2, 1, 0)   # f = 0.8
    m2 = metrics_from_counts(1, 0, 0)   # f = 1.0
    mean, std = aggregate([m1, m2])
    assert mean["f_measure"] == pytest.approx(0.9)
    assert std["f_measure"] == pytest.approx(0.1)


def test_single_run_has_zero_std(synthetic):
    manifest, features, vocab = synthetic
    res = run_experiment(manifest, features, vocab, model_cfg(vocab),
                         TrainConfig(epochs=2, learning_rate=1e-2, num_runs=1))
    assert res.std == {"precision": 0.0, "recall": 0.0, "f_measure": 0.0}
    assert res.mean["f_measure"] == res.runs[0].history.test_metrics.f_measure


def test_runs_use_consecutive_seeds(synthetic):
    manifest, features, vocab = synthetic
    res = run_experiment(manifest, features, vocab, model_cfg(vocab),
                         TrainConfig(epochs=1, num_runs=3, seed=7))
    assert [r.seed for r in res.runs] == [7, 8, 9]
    data = res.to_json()
    assert set(data) == {"config", "runs", "aggregate"}
    assert set(data["aggregate"]) == {"mean", "std"}
