"""Checkpoints: a JSON manifest plus one little-endian binary blob.

The manifest lists (name, shape, dtype, byte offset) per tensor, a config
snapshot (paths excluded: they are run-local), the vocabulary hash, and the
training step. Loading validates sizes and hashes; applying a checkpoint to a
model with a different architecture names both configurations in the error.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import numpy as np

from ..config import RunConfig
from ..errors import CheckpointError
from ..lm.vocab import Vocabulary
from ..pipeline import KeypointModel

MANIFEST_NAME = "manifest.json"
BLOB_NAME = "weights.blob"
VOCAB_NAME = "vocab.txt"

_DTYPE_TAGS = {np.dtype(np.float32): "<f4", np.dtype(np.float64): "<f8"}


def _config_snapshot(cfg: RunConfig) -> dict:
    return {section: dataclasses.asdict(getattr(cfg, section))
            for section in ("model", "train", "data", "eval")}


def config_from_snapshot(snapshot: dict) -> RunConfig:
    cfg = RunConfig()
    for section, values in snapshot.items():
        sub = getattr(cfg, section)
        for key, value in values.items():
            setattr(sub, key, value)
    return cfg.validate()


def save_checkpoint(path, model: KeypointModel, cfg: RunConfig, vocab: Vocabulary,
                    step: int, optim=None) -> Path:
    """Write manifest + blob (+ the vocabulary text file) into a directory."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    arrays = dict(model.state_arrays())
    if optim is not None:
        arrays.update(optim.state_arrays())
    entries = []
    offset = 0
    blob_parts = []
    for name in sorted(arrays):
        arr = arrays[name]
        tag = _DTYPE_TAGS.get(arr.dtype)
        if tag is None:
            raise CheckpointError(f"unsupported tensor dtype {arr.dtype} for {name}")
        raw = np.ascontiguousarray(arr).astype(tag).tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "dtype": tag,
                        "offset": offset, "nbytes": len(raw)})
        blob_parts.append(raw)
        offset += len(raw)
    manifest = {
        "schema": "v1",
        "step": int(step),
        "optim_step": int(optim.t) if optim is not None else 0,
        "vocab_sha256": vocab.sha256(),
        "config": _config_snapshot(cfg),
        "tensors": entries,
    }
    with open(path / MANIFEST_NAME, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=1)
        fh.write("\n")
    with open(path / BLOB_NAME, "wb") as fh:
        fh.write(b"".join(blob_parts))
    vocab.save(path / VOCAB_NAME)
    return path


def load_checkpoint(path) -> tuple[dict, dict]:
    """-> (manifest, {name: ndarray}); validates blob length per entry."""
    path = Path(path)
    mpath, bpath = path / MANIFEST_NAME, path / BLOB_NAME
    if not mpath.exists() or not bpath.exists():
        raise CheckpointError(f"checkpoint incomplete under {path}")
    with open(mpath, encoding="utf-8") as fh:
        try:
            manifest = json.load(fh)
        except json.JSONDecodeError as e:
            raise CheckpointError(f"corrupt manifest {mpath}: {e}") from e
    blob = bpath.read_bytes()
    expected = sum(e["nbytes"] for e in manifest["tensors"])
    if len(blob) != expected:
        raise CheckpointError(
            f"blob length {len(blob)} differs from manifest total {expected} (truncated?)")
    arrays = {}
    for e in manifest["tensors"]:
        raw = blob[e["offset"]:e["offset"] + e["nbytes"]]
        arr = np.frombuffer(raw, dtype=e["dtype"]).reshape(e["shape"]).copy()
        arrays[e["name"]] = arr
    return manifest, arrays


def check_model_compat(manifest: dict, cfg: RunConfig) -> None:
    """The architecture sections must agree before weights can be applied."""
    stored = manifest["config"]["model"]
    current = dataclasses.asdict(cfg.model)
    diffs = {k: (stored.get(k), current[k]) for k in current
             if stored.get(k) != current[k]}
    if diffs:
        detail = ", ".join(f"{k}: checkpoint={a!r} vs run={b!r}" for k, (a, b) in diffs.items())
        raise CheckpointError(f"incompatible model configuration ({detail})")


def restore_model(path, vocab: Vocabulary | None = None,
                  seed: int = 0) -> tuple[KeypointModel, RunConfig, dict, dict]:
    """Rebuild a model from a checkpoint directory and load its weights."""
    manifest, arrays = load_checkpoint(path)
    cfg = config_from_snapshot(manifest["config"])
    if vocab is None:
        vocab = Vocabulary.load(Path(path) / VOCAB_NAME)
    if vocab.sha256() != manifest["vocab_sha256"]:
        raise CheckpointError("vocabulary hash differs from the checkpoint manifest")
    model = KeypointModel(cfg.model, vocab, seed=seed)
    model.load_state({k: v for k, v in arrays.items() if not k.startswith("optim.")})
    return model, cfg, manifest, arrays
