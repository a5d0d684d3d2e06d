"""Independent oracles the tests check the library against.

Everything here is deliberately written as plain scalar loops, separate from
the library's vectorized implementations.
"""

from __future__ import annotations

import math

import numpy as np


def finite_diff_grad(f, x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of the scalar function `f` w.r.t. `x`.

    `f` takes no arguments and must read the current contents of `x` (which
    is perturbed in place and restored).
    """
    g = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        fp = f()
        flat[i] = old - eps
        fm = f()
        flat[i] = old
        gf[i] = (fp - fm) / (2.0 * eps)
    return g


def max_rel_err(got: np.ndarray, want: np.ndarray) -> float:
    got = np.asarray(got, dtype=np.float64)
    want = np.asarray(want, dtype=np.float64)
    scale = max(np.abs(want).max(), 1e-8)
    return float(np.abs(got - want).max() / scale)


def oks_scalar_loop(pred: dict, gt_px: dict, area: float, k) -> float:
    """OKS as an explicit loop over keypoint names present in gt_px."""
    total = 0.0
    n = 0
    for name, (gx, gy) in gt_px.items():
        ki = k[name] if isinstance(k, dict) else k
        px, py = pred[name][0], pred[name][1]
        d2 = (px - gx) ** 2 + (py - gy) ** 2
        total += math.exp(-d2 / (2.0 * area * ki * ki))
        n += 1
    return total / n


def pck_scalar_loop(entries, alpha: float) -> tuple[int, int]:
    """entries: (pred_xy, gt_xy, bbox_w, bbox_h) per keypoint -> (correct, total)."""
    correct = 0
    for (px, py), (gx, gy), w, h in entries:
        d = math.hypot(px - gx, py - gy)
        if d <= alpha * max(w, h):
            correct += 1
    return correct, len(entries)


def ap_scalar_loop(oks_conf, threshold: float) -> float:
    """101-point interpolated AP at one OKS threshold; explicit loops."""
    ranked = sorted(range(len(oks_conf)), key=lambda i: (-oks_conf[i][1], i))
    n = len(oks_conf)
    tp = 0
    precisions = []
    recalls = []
    for rank, idx in enumerate(ranked, start=1):
        if oks_conf[idx][0] >= threshold:
            tp += 1
        precisions.append(tp / rank)
        recalls.append(tp / n)
    total = 0.0
    for level in range(101):
        r = level / 100.0
        best = 0.0
        for p, rec in zip(precisions, recalls):
            if rec >= r and p > best:
                best = p
        total += best
    return total / 101.0


def ar_scalar_loop(oks_conf, thresholds) -> float:
    n = len(oks_conf)
    recalls = []
    for t in thresholds:
        hits = sum(1 for o, _ in oks_conf if o >= t)
        recalls.append(hits / n)
    return sum(recalls) / len(recalls)


def cross_entropy_scalar_loop(logits: np.ndarray, targets) -> list[float]:
    """Per-row -log softmax[target] with explicit summation loops."""
    out = []
    for row, tgt in zip(logits, targets):
        m = max(float(v) for v in row)
        denom = sum(math.exp(float(v) - m) for v in row)
        out.append(-(float(row[tgt]) - m - math.log(denom)))
    return out
