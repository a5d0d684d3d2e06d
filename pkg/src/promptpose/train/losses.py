"""Training objectives.

Detection with the special-token strategy combines an L1 position term with
the language-modeling cross-entropy, `lambda * |y - y_hat| + ce`; the
numerical-text strategy (and semantic understanding) trains on cross-entropy
alone, since positions live inside the answer text there.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import numerics as nm
from ..config import STRATEGY_SPECIAL, STRATEGY_TEXT
from ..errors import ContractError
from ..numerics import Tensor


@dataclass
class LossConfig:
    lambda_pos: float = 2.0
    strategy: str = STRATEGY_TEXT
    itd: bool = True
    l1_reduction: str = "sum"     # over the 2 coordinates: sum | mean


def lm_loss(logits: Tensor, targets: np.ndarray, mask: np.ndarray) -> Tensor:
    """Mean cross-entropy over masked positions.

    `logits` (N, V), `targets` (N,) token ids, `mask` (N,) bool selecting the
    answer region; instruction and prefix positions stay unsupervised.
    """
    mask = np.asarray(mask, dtype=bool)
    count = int(mask.sum())
    if count == 0:
        raise ContractError("loss mask selects no positions")
    ce = nm.cross_entropy_with_logits(logits, np.asarray(targets, dtype=np.int64))
    weights = Tensor((mask / count).astype(logits.dtype))
    return nm.tsum(nm.mul(ce, weights))


def combined_loss(y: Tensor, y_hat: np.ndarray, lm: Tensor, cfg: LossConfig) -> Tensor:
    """lambda * L1(y, y_hat) + lm, averaged over samples.

    `y` (N, 2) head outputs, `y_hat` (N, 2) ground truth. L1 per sample is the
    sum of absolute coordinate errors (configurable to the mean).
    """
    if cfg.strategy != STRATEGY_SPECIAL:
        raise ContractError("combined position loss applies to the special-token strategy only")
    y_hat = np.asarray(y_hat, dtype=y.dtype)
    if y.shape != y_hat.shape:
        raise ContractError(f"position shapes differ: {y.shape} vs {y_hat.shape}")
    n = y.shape[0] if y.ndim > 1 else 1
    l1 = nm.l1_distance(y, Tensor(y_hat))
    scale = cfg.lambda_pos / n
    if cfg.l1_reduction == "mean":
        scale /= 2.0
    return nm.add(nm.mul(l1, scale), lm)
