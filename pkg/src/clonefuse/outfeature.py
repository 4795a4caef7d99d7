"""Run code fragments and turn the similarity of their outputs into a feature vector."""

from __future__ import annotations

import json
import math
import os
import shlex
import signal
import subprocess
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from .errors import ConfigError

OUTPUT_CAP = 1 << 20  # bytes of stdout kept per execution
STATUSES = ("ok", "compile_error", "runtime_error", "timeout")


@dataclass(frozen=True)
class ExecutionResult:
    status: str
    stdout: str = ""
    duration: float = 0.0


@dataclass(frozen=True)
class ExecutorConfig:
    mode: str = "scripted"
    command_template: str = ""
    timeout: float = 10.0
    fixtures: dict = field(default_factory=dict)
    fallback: float = 0.5
    d_f: int = 1

    def __post_init__(self):
        if self.mode not in ("scripted", "subprocess"):
            raise ConfigError(f"unknown executor mode {self.mode!r}")
        if not self.timeout > 0:
            raise ConfigError(f"executor timeout must be positive, got {self.timeout}")
        if self.mode == "subprocess" and "{file}" not in self.command_template:
            raise ConfigError("subprocess mode needs a command_template containing {file}")
        if not 0.0 <= self.fallback <= 1.0:
            raise ConfigError(f"fallback must lie in [0, 1], got {self.fallback}")
        if self.d_f < 1:
            raise ConfigError(f"d_f must be at least 1, got {self.d_f}")

    @classmethod
    def from_dict(cls, data: dict, base_dir=None) -> "ExecutorConfig":
        data = dict(data)
        fixtures = data.pop("fixtures", {})
        fixtures_file = data.pop("fixtures_file", None)
        if fixtures_file is not None:
            path = Path(fixtures_file)
            if base_dir is not None and not path.is_absolute():
                path = Path(base_dir) / path
            try:
                with open(path, encoding="utf-8") as fh:
                    loaded = json.load(fh)
            except (OSError, ValueError) as exc:
                raise ConfigError(f"cannot read fixtures file {path}: {exc}") from exc
            fixtures = {**loaded, **fixtures}
        try:
            return cls(fixtures=fixtures, **data)
        except TypeError as exc:
            raise ConfigError(f"bad executor config: {exc}") from exc


@dataclass(frozen=True)
class OutputFeature:
    value: tuple
    available: bool

    def to_json(self) -> dict:
        return {"value": list(self.value), "available": self.available}


def execute_fragment(fragment, cfg: ExecutorConfig) -> ExecutionResult:
    if cfg.mode == "scripted":
        return _scripted(fragment.id, cfg)
    return _run_subprocess(fragment.path, cfg)


def _scripted(frag_id: str, cfg: ExecutorConfig) -> ExecutionResult:
    entry = cfg.fixtures.get(frag_id)
    if entry is None:
        return ExecutionResult("runtime_error")
    if isinstance(entry, str):
        return ExecutionResult("ok", entry)
    status = entry.get("status", "ok")
    if status not in STATUSES:
        raise ConfigError(f"fixture for {frag_id} has unknown status {status!r}")
    stdout = entry.get("stdout", "") if status in ("ok", "runtime_error") else ""
    return ExecutionResult(status, stdout, float(entry.get("duration", 0.0)))


def _run_subprocess(path: str, cfg: ExecutorConfig) -> ExecutionResult:
    argv = [arg.replace("{file}", str(path)) for arg in shlex.split(cfg.command_template)]
    start = time.monotonic()
    try:
        proc = subprocess.Popen(
            argv, stdin=subprocess.DEVNULL, stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL, start_new_session=True,
        )
    except OSError:
        return ExecutionResult("runtime_error", "", time.monotonic() - start)
    try:
        out, _ = proc.communicate(timeout=cfg.timeout)
    except subprocess.TimeoutExpired:
        # kill the whole session so grandchildren do not linger
        try:
            os.killpg(proc.pid, signal.SIGKILL)
        except ProcessLookupError:
            pass
        proc.communicate()
        return ExecutionResult("timeout", "", time.monotonic() - start)
    duration = time.monotonic() - start
    stdout = out[:OUTPUT_CAP].decode("utf-8", errors="replace")
    status = "ok" if proc.returncode == 0 else "runtime_error"
    return ExecutionResult(status, stdout, duration)


def _terms(text: str) -> list:
    return " ".join(text.split()).lower().split()


def output_similarity(out_a: str, out_b: str) -> float:
    """Cosine similarity of whitespace-token frequency vectors after normalisation."""
    ta, tb = Counter(_terms(out_a)), Counter(_terms(out_b))
    if not ta and not tb:
        return 1.0
    if not ta or not tb:
        return 0.0
    dot = sum(c * tb[t] for t, c in ta.items())
    # integer sums keep identity exactly 1.0 and the score symmetric
    norm = math.sqrt(sum(c * c for c in ta.values()) * sum(c * c for c in tb.values()))
    return min(1.0, max(0.0, dot / norm))


def compute_pair_feature(pair, manifest, cfg: ExecutorConfig,
                         scorer: Callable[[str, str], float] = output_similarity,
                         runs: dict | None = None) -> OutputFeature:
    """Execute both fragments of ``pair`` and score their outputs.

    ``runs`` is an optional cache of ExecutionResult keyed by fragment id.
    """
    frags = manifest.by_id()
    for frag_id in (pair.id_a, pair.id_b):
        if frag_id not in frags:
            raise KeyError(f"unknown fragment id {frag_id!r}")
    results = []
    for frag_id in (pair.id_a, pair.id_b):
        if runs is not None and frag_id in runs:
            results.append(runs[frag_id])
        else:
            results.append(execute_fragment(frags[frag_id], cfg))
    fallback = (cfg.fallback,) * cfg.d_f
    if results[0].status != "ok" or results[1].status != "ok":
        return OutputFeature(fallback, False)
    score = float(scorer(results[0].stdout, results[1].stdout))
    return OutputFeature((score,) + fallback[1:], True)


def compute_features(manifest, cfg: ExecutorConfig, max_workers: int = 4,
                     scorer: Callable[[str, str], float] = output_similarity) -> dict:
    """Features for every pair, keyed (and ordered) by pair key.

    Each fragment runs once even when it takes part in several pairs.
    """
    needed = sorted({i for p in manifest.pairs for i in (p.id_a, p.id_b)})
    frags = manifest.by_id()
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        results = list(pool.map(lambda i: execute_fragment(frags[i], cfg), needed))
    runs = dict(zip(needed, results))
    features = {
        p.key: compute_pair_feature(p, manifest, cfg, scorer=scorer, runs=runs)
        for p in manifest.pairs
    }
    return dict(sorted(features.items()))


def save_features(features: dict, path) -> None:
    payload = {k: f.to_json() for k, f in sorted(features.items())}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_features(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        return {k: OutputFeature(tuple(float(x) for x in v["value"]), bool(v["available"]))
                for k, v in raw.items()}
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"cannot read features file {path}: {exc}") from exc
