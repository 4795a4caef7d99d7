"""Dataset ingestion, pair formation and seeded splitting."""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .codeparse import lex
from .errors import IngestError, LexError

SCHEMA_VERSION = 1
KINDS = ("original", "plagiarized", "non_plagiarized")

# IR-Plag spells the folder with a hyphen; accept both spellings.
_KIND_DIRS = {
    "original": "original",
    "plagiarized": "plagiarized",
    "non-plagiarized": "non_plagiarized",
    "non_plagiarized": "non_plagiarized",
}
SOURCE_SUFFIXES = frozenset(
    ".java .c .cc .cpp .cxx .h .hpp .cs .js .ts .go .kt .scala .swift .rs".split()
)
DEFAULT_FALLBACK = 0.5


@dataclass(frozen=True)
class CodeFragment:
    id: str
    path: str
    source: str
    task: str
    kind: str


@dataclass(frozen=True)
class PairExample:
    id_a: str
    id_b: str
    label: int
    out_feature: tuple = (DEFAULT_FALLBACK,)
    available: bool = False

    @property
    def key(self) -> str:
        return pair_key(self.id_a, self.id_b)

    def __post_init__(self):
        if self.id_a == self.id_b:
            raise ValueError(f"pair references the same fragment twice: {self.id_a}")
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label!r}")
        if any(not 0.0 <= v <= 1.0 for v in self.out_feature):
            raise ValueError(f"out_feature outside [0, 1]: {self.out_feature}")


def pair_key(id_a: str, id_b: str) -> str:
    return f"{id_a}::{id_b}"


@dataclass(frozen=True)
class CorpusStats:
    total_tokens: int = 0
    unique_tokens: int = 0
    min_tokens: int = 0
    max_tokens: int = 0
    avg_tokens: float = 0.0
    num_fragments: int = 0
    num_pairs: int = 0
    num_positive_pairs: int = 0


@dataclass
class CorpusManifest:
    fragments: list
    pairs: list
    stats: CorpusStats = field(default_factory=CorpusStats)

    def __post_init__(self):
        ids = [f.id for f in self.fragments]
        if len(set(ids)) != len(ids):
            raise IngestError("duplicate fragment ids in manifest")
        known = set(ids)
        for p in self.pairs:
            if p.id_a not in known or p.id_b not in known:
                raise IngestError(f"pair {p.key} references an unknown fragment")

    def fragment(self, frag_id: str) -> CodeFragment:
        for f in self.fragments:
            if f.id == frag_id:
                return f
        raise KeyError(frag_id)

    def by_id(self) -> dict:
        return {f.id: f for f in self.fragments}

    def to_json(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "fragments": [asdict(f) for f in self.fragments],
            "pairs": [
                {**asdict(p), "out_feature": list(p.out_feature)} for p in self.pairs
            ],
            "stats": asdict(self.stats),
        }

    @classmethod
    def from_json(cls, data: dict) -> "CorpusManifest":
        version = data.get("schema_version")
        if version != SCHEMA_VERSION:
            raise IngestError(f"unsupported manifest schema_version {version!r}")
        fragments = [CodeFragment(**f) for f in data["fragments"]]
        pairs = [
            PairExample(
                p["id_a"], p["id_b"], int(p["label"]),
                tuple(p.get("out_feature", (DEFAULT_FALLBACK,))), bool(p.get("available", False)),
            )
            for p in data["pairs"]
        ]
        return cls(fragments, pairs, CorpusStats(**data.get("stats", {})))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "CorpusManifest":
        try:
            with open(path, encoding="utf-8") as fh:
                return cls.from_json(json.load(fh))
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise IngestError(f"cannot read manifest {path}: {exc}") from exc


def _read_source(path: Path) -> str:
    try:
        return path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc


def _source_files(directory: Path) -> list:
    found = []
    for dirpath, dirnames, filenames in os.walk(directory):
        dirnames[:] = sorted(d for d in dirnames if not d.startswith("."))
        for name in sorted(filenames):
            p = Path(dirpath) / name
            if not name.startswith(".") and p.suffix.lower() in SOURCE_SUFFIXES:
                found.append(p)
    return found


def ingest_irplag(root) -> CorpusManifest:
    """Read an IR-Plag style tree: ``<task>/{original,plagiarized,non-plagiarized}/...``.

    Every original is paired with each variant of its own task; plagiarized
    variants get label 1, non-plagiarized ones label 0.
    """
    root = Path(root)
    if not root.is_dir():
        raise IngestError(f"dataset root {root} does not exist or is not a directory")
    task_dirs = sorted(p for p in root.iterdir() if p.is_dir() and not p.name.startswith("."))
    if not task_dirs:
        raise IngestError(f"dataset root {root} contains no task folders")

    fragments, pairs = [], []
    for task_dir in task_dirs:
        by_kind = {k: [] for k in KINDS}
        for sub in sorted(task_dir.iterdir()):
            kind = _KIND_DIRS.get(sub.name.lower())
            if kind is None or not sub.is_dir():
                continue
            for path in _source_files(sub):
                rel = path.relative_to(sub).as_posix()
                frag = CodeFragment(
                    id=f"{task_dir.name}/{kind}/{rel}",
                    path=str(path),
                    source=_read_source(path),
                    task=task_dir.name,
                    kind=kind,
                )
                if not frag.source.strip():
                    raise IngestError(f"empty source file {path}")
                by_kind[kind].append(frag)
        if not any(by_kind.values()):
            continue
        if not by_kind["original"]:
            raise IngestError(f"task folder {task_dir} has no original file")
        for kind in KINDS:
            fragments.extend(by_kind[kind])
        for orig in by_kind["original"]:
            for variant in by_kind["plagiarized"]:
                pairs.append(PairExample(orig.id, variant.id, 1))
            for variant in by_kind["non_plagiarized"]:
                pairs.append(PairExample(orig.id, variant.id, 0))
    if not fragments:
        raise IngestError(f"no source files found under {root}")
    manifest = CorpusManifest(fragments, pairs)
    manifest.stats = corpus_stats(manifest)
    return manifest


def ingest_pairs_csv(csv_path) -> CorpusManifest:
    """Generic corpus: a CSV with columns path_a, path_b, label (paths relative to the CSV)."""
    csv_path = Path(csv_path)
    if not csv_path.is_file():
        raise IngestError(f"pairs file {csv_path} does not exist")
    base = csv_path.parent
    fragments: dict = {}
    pairs = []
    seen = set()
    with open(csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"path_a", "path_b", "label"} - set(reader.fieldnames or ())
        if missing:
            raise IngestError(f"{csv_path} lacks columns {sorted(missing)}")
        for row in reader:
            label = int(row["label"])
            ids = []
            for col, kind in (("path_a", "original"),
                              ("path_b", "plagiarized" if label else "non_plagiarized")):
                rel = row[col].strip()
                if rel not in fragments:
                    path = base / rel
                    source = _read_source(path)
                    if not source.strip():
                        raise IngestError(f"empty source file {path}")
                    fragments[rel] = CodeFragment(rel, str(path), source, "csv", kind)
                ids.append(rel)
            unordered = frozenset(ids)
            if len(unordered) == 2 and unordered not in seen:
                seen.add(unordered)
                pairs.append(PairExample(ids[0], ids[1], label))
    if not fragments:
        raise IngestError(f"{csv_path} lists no pairs")
    manifest = CorpusManifest(list(fragments.values()), pairs)
    manifest.stats = corpus_stats(manifest)
    return manifest


def ingest(path) -> CorpusManifest:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return ingest_pairs_csv(path)
    if path.is_file() and path.suffix.lower() == ".json":
        return CorpusManifest.load(path)
    return ingest_irplag(path)


def corpus_stats(manifest: CorpusManifest) -> CorpusStats:
    counts, vocab = [], set()
    for frag in manifest.fragments:
        try:
            toks = lex(frag.source)
        except LexError as exc:
            raise IngestError(f"cannot lex {frag.path}: {exc}") from exc
        counts.append(len(toks))
        vocab.update(t.text for t in toks)
    total = sum(counts)
    return CorpusStats(
        total_tokens=total,
        unique_tokens=len(vocab),
        min_tokens=min(counts) if counts else 0,
        max_tokens=max(counts) if counts else 0,
        avg_tokens=total / len(counts) if counts else 0.0,
        num_fragments=len(manifest.fragments),
        num_pairs=len(manifest.pairs),
        num_positive_pairs=sum(p.label for p in manifest.pairs),
    )


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.70
    val_frac: float = 0.15
    test_frac: float = 0.15
    seed: int = 0

    def __post_init__(self):
        fracs = (self.train_frac, self.val_frac, self.test_frac)
        if any(f <= 0 for f in fracs):
            raise ValueError(f"split fractions must be positive, got {fracs}")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise ValueError(f"split fractions must sum to 1, got {sum(fracs)!r}")


def split_dataset(manifest_or_pairs, spec: SplitSpec):
    """Shuffle with ``default_rng(seed)`` and cut floor/floor/remainder."""
    pairs = list(getattr(manifest_or_pairs, "pairs", manifest_or_pairs))
    n = len(pairs)
    if n < 3:
        raise ValueError(f"need at least 3 pairs to split, got {n}")
    order = np.random.default_rng(spec.seed).permutation(n)
    n_train = math.floor(spec.train_frac * n)
    n_val = math.floor(spec.val_frac * n)
    shuffled = [pairs[i] for i in order]
    return shuffled[:n_train], shuffled[n_train:n_train + n_val], shuffled[n_train + n_val:]


def attach_features(pairs, features: dict) -> list:
    """Copy ``OutputFeature`` values (keyed by pair key) onto the pairs."""
    out = []
    for p in pairs:
        feat = features.get(p.key)
        if feat is None:
            out.append(p)
        else:
            out.append(replace(p, out_feature=tuple(feat.value), available=feat.available))
    return out


def fixture_root() -> Path:
    """Directory of the bundled two-task mini corpus."""
    return Path(str(resources.files("clonefuse") / "data" / "fixture_corpus"))


def fixture_outputs_path() -> Path:
    return Path(str(resources.files("clonefuse") / "data" / "fixture_outputs.json"))


def synthetic_corpus(n_pairs: int, seed: int, n_symbols: int = 40,
                     min_len: int = 5, max_len: int = 20):
    """Random-token pairs whose label is fully determined by the output feature.

    Returns ``(manifest, features)``. Each pair gets two fresh fragments of
    random symbols; its feature is drawn uniformly from [0, 1] and the label
    is ``feature > 0.5``, so token content carries no signal.
    """
    from .outfeature import OutputFeature

    rng = np.random.default_rng(seed)
    symbols = [f"s{i}" for i in range(n_symbols)]
    fragments, pairs, features = [], [], {}
    for k in range(n_pairs):
        value = float(rng.random())
        label = int(value > 0.5)
        ids = []
        for side, kind in (("a", "original"), ("b", KINDS[2 - label])):
            length = int(rng.integers(min_len, max_len + 1))
            text = " ".join(symbols[j] for j in rng.integers(0, n_symbols, size=length))
            frag_id = f"syn{k:04d}/{side}"
            fragments.append(CodeFragment(frag_id, "", text, f"syn{k:04d}", kind))
            ids.append(frag_id)
        pair = PairExample(ids[0], ids[1], label, (value,), True)
        pairs.append(pair)
        features[pair.key] = OutputFeature((value,), True)
    manifest = CorpusManifest(fragments, pairs)
    manifest.stats = corpus_stats(manifest)
    return manifest, features
