"""Command-line entry point: ingest, stats, features, train, eval, compare, gradcheck."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path

from . import __version__
from .checkpoint import load_checkpoint, save_checkpoint
from .codeparse import build_vocab
from .config import load_config, with_train_overrides
from .corpus import CorpusManifest, attach_features, corpus_stats, ingest, synthetic_corpus
from .errors import CloneFuseError
from .evalx import ComparisonRow, compare_table
from .gradcheck import gradient_check, tiny_config
from .model import ModelConfig
from .outfeature import compute_features, load_features, save_features
from .train import TrainConfig, build_examples, evaluate, run_experiment

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CHECK = 0, 1, 2, 3

log = logging.getLogger("clonefuse")


class _JsonLines(logging.Formatter):
    def format(self, record):
        return json.dumps({"level": record.levelname.lower(), "logger": record.name,
                           "msg": record.getMessage()}, sort_keys=True)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _setup_logging(verbose: bool) -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(_JsonLines())
    root = logging.getLogger("clonefuse")
    root.handlers[:] = [handler]
    root.setLevel(logging.DEBUG if verbose else logging.INFO)
    root.propagate = False


def _write_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_dataset(cfg):
    if cfg.synthetic is not None:
        manifest, features = synthetic_corpus(**cfg.synthetic)
        return manifest, features
    manifest = ingest(cfg.dataset)
    if cfg.features and Path(cfg.features).exists():
        features = load_features(cfg.features)
    else:
        features = compute_features(manifest, cfg.executor)
        if cfg.features:
            save_features(features, cfg.features)
    return manifest, features


def cmd_ingest(args) -> int:
    manifest = ingest(args.root)
    manifest.save(args.output)
    log.info("ingested %d fragments, %d pairs into %s",
             len(manifest.fragments), len(manifest.pairs), args.output)
    return EXIT_OK


def cmd_stats(args) -> int:
    manifest = CorpusManifest.load(args.manifest)
    print(json.dumps(asdict(corpus_stats(manifest)), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_features(args) -> int:
    cfg = load_config(args.config)
    manifest = CorpusManifest.load(args.manifest)
    features = compute_features(manifest, cfg.executor, max_workers=args.workers)
    save_features(features, args.output)
    available = sum(f.available for f in features.values())
    log.info("computed %d features (%d available) into %s", len(features), available, args.output)
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    cfg = with_train_overrides(
        cfg, use_feature=False if args.no_feature else None, seed=args.seed,
        num_runs=args.runs, epochs=args.epochs,
    )
    manifest, features = _load_dataset(cfg)
    vocab = build_vocab(manifest, cfg.vocab_max_size)
    model_cfg = ModelConfig.from_dict({**cfg.model, "vocab_size": vocab.size})
    result = run_experiment(manifest, features, vocab, model_cfg, cfg.train, cfg.split,
                            keep_params=True)
    out = Path(args.output)
    _write_json(result.to_json(), out)
    ckpt_dir = Path(cfg.output_dir) if cfg.output_dir else out.parent
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    for i, run in enumerate(result.runs):
        path = ckpt_dir / f"{out.stem}.run{i}.ckpt"
        save_checkpoint(path, run.params, replace(model_cfg, seed=run.seed), vocab,
                        meta={"seed": run.seed, "use_feature": cfg.train.use_feature,
                              "fallback": cfg.train.fallback})
    log.info("mean f-measure %.4f over %d runs -> %s", result.mean["f_measure"], len(result.runs), out)
    return EXIT_OK


def cmd_eval(args) -> int:
    params, model_cfg, vocab, meta = load_checkpoint(args.checkpoint)
    if vocab is None:
        raise CloneFuseError(f"checkpoint {args.checkpoint} carries no vocabulary")
    manifest = CorpusManifest.load(args.manifest)
    pairs = attach_features(manifest.pairs, load_features(args.features))
    examples = build_examples(pairs, manifest, vocab, model_cfg.max_len, model_cfg.dataflow_bias)
    use_feature = meta.get("use_feature", True) and not args.no_feature
    tcfg = TrainConfig(use_feature=use_feature, fallback=meta.get("fallback", 0.5))
    metrics = evaluate(params, model_cfg, examples, tcfg)
    print(json.dumps(metrics.to_json(), indent=2, sort_keys=True))
    return EXIT_OK


def _rows_from_results(path) -> ComparisonRow:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    mean = data["aggregate"]["mean"]
    feature = data.get("config", {}).get("train", {}).get("use_feature", True)
    name = f"{Path(path).stem} ({'with' if feature else 'without'} feature)"
    return ComparisonRow(name, mean["precision"], mean["recall"], mean["f_measure"])


def cmd_compare(args) -> int:
    try:
        rows = [_rows_from_results(p) for p in args.results]
    except (OSError, ValueError, KeyError) as exc:
        raise CloneFuseError(f"cannot read results: {exc}") from exc
    text = compare_table(rows, "csv" if args.format == "csv" else "markdown")
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    cfg = tiny_config(dropout_p=args.dropout, dataflow_bias=args.dataflow)
    report = gradient_check(cfg, seed=args.seed, n_probes=args.probes, tol=args.tol,
                            train=args.dropout > 0)
    print(json.dumps(report.to_json(), indent=2, sort_keys=True))
    return EXIT_OK if report.passed else EXIT_CHECK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="clonefuse", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")

    p = sub.add_parser("ingest", help="build manifest.json from an IR-Plag tree or pairs.csv")
    p.add_argument("root")
    p.add_argument("-o", "--output", default="manifest.json")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("stats", help="token statistics of a manifest")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("features", help="execute fragments and score output similarity")
    p.add_argument("manifest")
    p.add_argument("-c", "--config", required=True)
    p.add_argument("-o", "--output", default="features.json")
    p.add_argument("--workers", type=int, default=4)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("train", help="run the multi-run training experiment")
    p.add_argument("-c", "--config", required=True)
    p.add_argument("-o", "--output", default="results.json")
    p.add_argument("--no-feature", action="store_true", help="feed the constant fallback feature")
    p.add_argument("--seed", type=int)
    p.add_argument("--runs", type=int)
    p.add_argument("--epochs", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on every pair of a manifest")
    p.add_argument("checkpoint")
    p.add_argument("manifest")
    p.add_argument("features")
    p.add_argument("--no-feature", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="comparison table with the reported rows")
    p.add_argument("results", nargs="*")
    p.add_argument("--format", choices=("md", "csv"), default="md")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("gradcheck", help="finite-difference check of the gradients")
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--probes", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dropout", type=float, default=0.0)
    p.add_argument("--dataflow", action="store_true")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if not getattr(args, "func", None):
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    _setup_logging(args.verbose)
    try:
        return args.func(args)
    except (CloneFuseError, ValueError, KeyError) as exc:
        log.error("%s", exc)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
