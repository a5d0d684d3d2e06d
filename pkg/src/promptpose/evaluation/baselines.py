"""Reference baselines for generalization probes.

The random-position baseline answers every query with a uniform draw over the
crop window, mapped back to scene pixels: the floor any trained model must
clear on held-out families.
"""

from __future__ import annotations

import numpy as np

from ..config import RunConfig
from ..numerics import Rng, derive_seed
from ..tasks.crop import crop_instance
from ..tasks.records import InstanceRecord
from ..tasks.synth import is_mirror_keypoint
from .metrics import EvalPair, pck


def random_position_pairs(records: list[InstanceRecord], cfg: RunConfig,
                          seed: int = 0, mirror_only: bool = False) -> list[EvalPair]:
    pairs = []
    for i, rec in enumerate(records):
        _, tf = crop_instance(rec, pad=cfg.data.pad, out_size=cfg.model.input_size)
        preds = {}
        for kp_idx, kp in enumerate(rec.keypoints):
            if not kp.labeled:
                continue
            if mirror_only and not is_mirror_keypoint(rec.category, kp.name):
                continue
            rng = Rng(derive_seed(seed, 0xBA5E, i, kp_idx))
            xy = np.array([rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0)])
            px = tf.crop_to_scene(xy)
            preds[kp.name] = (float(px[0]), float(px[1]), 0.5)
        if preds:
            pairs.append(EvalPair(record=rec, predictions=preds))
    return pairs


def random_position_pck(records: list[InstanceRecord], cfg: RunConfig, alpha: float = 0.2,
                        seed: int = 0, mirror_only: bool = False) -> float:
    pairs = random_position_pairs(records, cfg, seed=seed, mirror_only=mirror_only)
    return pck(pairs, alpha, cfg.eval.pck_normalizer)
