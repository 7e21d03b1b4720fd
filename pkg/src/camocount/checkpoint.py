"""Self-describing binary checkpoints.

Layout: 8-byte magic, uint32 format version, uint32 header length, then a
UTF-8 JSON header carrying the full model config, arbitrary metadata, and
the ordered entry table (name + shape per parameter), followed by the raw
little-endian float32 payloads in table order. Eval and inference rebuild
the model from the embedded config alone.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .model import CountingModel, ModelConfig

MAGIC = b"CAMOCKPT"
VERSION = 1


class CheckpointError(ValueError):
    """Corrupt or incompatible checkpoint file."""


def save_checkpoint(path, model: CountingModel,
                    extra: dict | None = None) -> None:
    state = model.state_arrays()
    entries = [{"name": name, "shape": list(arr.shape)}
               for name, arr in state.items()]
    header = json.dumps({"config": model.cfg.to_dict(),
                         "extra": extra or {},
                         "entries": entries}).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(header)))
        fh.write(header)
        for arr in state.values():
            fh.write(arr.astype("<f4").tobytes())
    tmp.replace(path)


def read_checkpoint(path) -> tuple[ModelConfig, dict[str, np.ndarray], dict]:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {raw[:8]!r}")
    version, hlen = struct.unpack("<II", raw[8:16])
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    header = json.loads(raw[16:16 + hlen].decode("utf-8"))
    cfg = ModelConfig.from_dict(header["config"])
    state: dict[str, np.ndarray] = {}
    at = 16 + hlen
    for entry in header["entries"]:
        shape = tuple(entry["shape"])
        n = int(np.prod(shape)) if shape else 1
        chunk = raw[at:at + 4 * n]
        if len(chunk) != 4 * n:
            raise CheckpointError(
                f"{path}: truncated payload for {entry['name']}")
        state[entry["name"]] = np.frombuffer(
            chunk, dtype="<f4").astype(np.float64).reshape(shape)
        at += 4 * n
    if at != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - at} trailing bytes")
    return cfg, state, header.get("extra", {})


def load_model(path) -> tuple[CountingModel, dict]:
    cfg, state, extra = read_checkpoint(path)
    model = CountingModel(cfg, seed=0)
    model.load_state(state)
    return model, extra
