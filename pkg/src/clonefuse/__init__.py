"""Source-code clone detection: a small transformer whose pooled output is fused
with an execution-output similarity feature before classification."""

__version__ = "0.1.0"

from .codeparse import Vocabulary, build_vocab, encode_pair, extract_dataflow, lex
from .corpus import CorpusManifest, PairExample, SplitSpec, ingest_irplag, split_dataset
from .evalx import Metrics, compare_table, compute_metrics
from .model import ModelConfig, backward, forward, init_params, loss, predict
from .outfeature import ExecutorConfig, compute_pair_feature, output_similarity
from .train import TrainConfig, run_experiment, train_model

__all__ = [
    "CorpusManifest", "ExecutorConfig", "Metrics", "ModelConfig", "PairExample", "SplitSpec",
    "TrainConfig", "Vocabulary", "backward", "build_vocab", "compare_table", "compute_metrics",
    "compute_pair_feature", "encode_pair", "extract_dataflow", "forward", "ingest_irplag",
    "init_params", "lex", "loss", "output_similarity", "predict", "run_experiment",
    "split_dataset", "train_model",
]
