"""Dataset files: one JSON object per line, images as referenced PNGs.

Layout under a dataset directory:

    gen_config.ini        generation settings (reproducibility artifact)
    train.jsonl / val.jsonl / test.jsonl
    images/<split>_<index>.png

The first line of every .jsonl is a header carrying the schema version.
Serialization is canonical (sorted keys, repr floats), so write -> read ->
write is byte-identical.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np
from PIL import Image

from ..config import DataConfig
from ..errors import DatasetError
from ..numerics import derive_seed
from .records import InstanceRecord, Keypoint, VIS_ABSENT
from .synth import FAMILIES, SyntheticSceneSpec, render_scene

SCHEMA_VERSION = "v1"
_SPLITS = ("train", "val", "test")


def _record_to_json(rec: InstanceRecord, image_ref: str) -> str:
    obj = {
        "id": rec.record_id,
        "category": rec.category,
        "bbox": [float(v) for v in rec.bbox],
        "image": image_ref,
        "keypoints": [
            {
                "name": kp.name,
                "description": kp.description,
                "position": None if kp.position is None else [float(kp.position[0]),
                                                              float(kp.position[1])],
                "visibility": kp.visibility,
            }
            for kp in rec.keypoints
        ],
        "skeleton": [[int(a), int(b)] for a, b in rec.skeleton],
    }
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def write_dataset(out_dir, records: list[InstanceRecord], split: str) -> Path:
    """Write one split; returns the .jsonl path."""
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{split}.jsonl"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"schema": SCHEMA_VERSION}, sort_keys=True,
                            separators=(",", ":")) + "\n")
        for i, rec in enumerate(records):
            ref = f"images/{split}_{i:05d}.png"
            Image.fromarray(rec.image).save(out_dir / ref, format="PNG")
            fh.write(_record_to_json(rec, ref) + "\n")
    return path


def read_dataset(path) -> list[InstanceRecord]:
    """Read one split; errors carry the offending line number or image path."""
    path = Path(path)
    base = path.parent
    records: list[InstanceRecord] = []
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DatasetError(f"{path}: empty file, missing schema header")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise DatasetError(f"{path}:1: malformed header: {e}") from e
    if header.get("schema") != SCHEMA_VERSION:
        raise DatasetError(f"{path}: unsupported schema {header.get('schema')!r}")
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise DatasetError(f"{path}:{lineno}: malformed record: {e}") from e
        img_path = base / obj["image"]
        if not img_path.exists():
            raise DatasetError(f"{path}:{lineno}: missing image file {img_path}")
        image = np.asarray(Image.open(img_path).convert("RGB"), dtype=np.uint8)
        try:
            keypoints = [
                Keypoint(name=k["name"], description=k["description"],
                         position=None if k["position"] is None else np.asarray(k["position"]),
                         visibility=k["visibility"])
                for k in obj["keypoints"]
            ]
            rec = InstanceRecord(image=image, bbox=tuple(obj["bbox"]),
                                 category=obj["category"], keypoints=keypoints,
                                 skeleton=[tuple(p) for p in obj["skeleton"]],
                                 record_id=obj["id"])
        except (KeyError, Exception) as e:  # noqa: BLE001 - rewrap with line info
            raise DatasetError(f"{path}:{lineno}: invalid record: {e}") from e
        records.append(rec)
    return records


def generate_splits(cfg: DataConfig) -> dict[str, list[InstanceRecord]]:
    """Render train/val/test records with disjoint seeds (80/10/10).

    With a holdout family, train and val rotate through the remaining
    families; test keeps the full family list, so the holdout appears there
    only.
    """
    families = cfg.family_list()
    holdout = cfg.holdout.strip()
    if holdout and holdout not in FAMILIES:
        raise DatasetError(f"unknown holdout family {holdout!r}")
    train_families = [f for f in families if f != holdout] if holdout else families
    if not train_families:
        raise DatasetError("holdout removes every family from training")

    n = cfg.count
    n_val = n // 10
    n_test = n // 10
    n_train = n - n_val - n_test
    out: dict[str, list[InstanceRecord]] = {}
    for split_idx, (split, count, fams) in enumerate((
            ("train", n_train, train_families),
            ("val", n_val, train_families),
            ("test", n_test, families))):
        records = []
        for i in range(count):
            family = fams[i % len(fams)]
            seed = derive_seed(cfg.seed, split_idx, i)
            spec = SyntheticSceneSpec(family=family, seed=seed, size=cfg.scene_size,
                                      occlusion=cfg.occlusion, clutter=cfg.clutter)
            rec = render_scene(spec)
            rec.record_id = f"{split}-{i:05d}-{family}"
            records.append(rec)
        out[split] = records
    return out


def load_splits(data_dir) -> dict[str, list[InstanceRecord]]:
    data_dir = Path(data_dir)
    out = {}
    for split in _SPLITS:
        p = data_dir / f"{split}.jsonl"
        if not p.exists():
            raise DatasetError(f"missing dataset split file {p}")
        out[split] = read_dataset(p)
    return out
