"""Single-file parameter checkpoints.

Layout (all integers little-endian)::

    bytes 0..7    magic  b"CLFUSE01"
    bytes 8..15   uint64 header length N
    next N bytes  UTF-8 JSON header:
                    {"config": {...model config...},
                     "vocab": {...vocabulary JSON...} or null,
                     "meta": {...},
                     "tensors": [{"name", "shape", "offset", "nbytes"}, ...]}
    remainder     tensor data, float64 little-endian, C order; each tensor's
                  offset is relative to the first byte after the header
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .codeparse import Vocabulary
from .errors import ConfigError
from .model import ModelConfig, check_params

MAGIC = b"CLFUSE01"
_DTYPE = np.dtype("<f8")


def save_checkpoint(path, params: dict, cfg: ModelConfig, vocab: Vocabulary | None = None,
                    meta: dict | None = None) -> None:
    entries, blobs, offset = [], [], 0
    for name, arr in params.items():
        data = np.ascontiguousarray(arr, dtype=_DTYPE).tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(data)})
        blobs.append(data)
        offset += len(data)
    header = json.dumps(
        {"config": cfg.to_dict(), "vocab": vocab.to_json() if vocab else None,
         "meta": meta or {}, "tensors": entries},
        sort_keys=True,
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path):
    """Return ``(params, cfg, vocab, meta)``."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read checkpoint {path}: {exc}") from exc
    if raw[:8] != MAGIC:
        raise ConfigError(f"{path} is not a checkpoint (bad magic)")
    (hlen,) = struct.unpack("<Q", raw[8:16])
    header = json.loads(raw[16:16 + hlen].decode("utf-8"))
    body = raw[16 + hlen:]
    params = {}
    for e in header["tensors"]:
        chunk = body[e["offset"]:e["offset"] + e["nbytes"]]
        if len(chunk) != e["nbytes"]:
            raise ConfigError(f"checkpoint {path} is truncated at tensor {e['name']}")
        params[e["name"]] = np.frombuffer(chunk, dtype=_DTYPE).reshape(e["shape"]).astype(np.float64)
    cfg = ModelConfig.from_dict(header["config"])
    check_params(params, cfg)
    vocab = Vocabulary.from_json(header["vocab"]) if header.get("vocab") else None
    return params, cfg, vocab, header.get("meta", {})
