"""Keypoint metrics: PCK, OKS, OKS-thresholded AP/AR, semantic accuracy.

Protocol pins:
  - PCK@alpha counts a keypoint correct iff its Euclidean error is <= alpha
    times the longest bbox side (boundary inclusive); the normalizer can be
    switched to the bbox diagonal.
  - OKS is the mean over labeled keypoints of exp(-d^2 / (2 * s^2 * k^2)) with
    s^2 the instance (bbox) area and per-keypoint constants k.
  - AP uses 101-point interpolated precision over confidence-ranked instances,
    one prediction per ground-truth instance (no detection matching); AR is
    the mean over thresholds of recall at the full ranking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import UndefinedMetricError
from ..tasks.records import InstanceRecord

OKS_THRESHOLDS = tuple(np.round(np.arange(0.50, 0.951, 0.05), 2))


@dataclass
class EvalPair:
    """One instance: predicted keypoints (scene pixels + confidence) vs truth."""

    record: InstanceRecord
    predictions: dict[str, tuple[float, float, float]]   # name -> (x_px, y_px, conf)

    @property
    def area(self) -> float:
        return self.record.area


def _normalizer(rec: InstanceRecord, kind: str) -> float:
    _, _, w, h = rec.bbox
    if kind == "diagonal":
        return math.hypot(w, h)
    return max(w, h)


def pck_counts(pairs: list[EvalPair], alpha: float,
               normalizer: str = "max_side") -> tuple[int, int]:
    """(correct, total) over labeled, non-absent keypoints."""
    correct = total = 0
    for pair in pairs:
        norm = _normalizer(pair.record, normalizer)
        for kp in pair.record.keypoints:
            if not kp.labeled:
                continue
            total += 1
            pred = pair.predictions.get(kp.name)
            if pred is None:
                continue
            gt = pair.record.keypoint_px(kp.name)
            d = math.hypot(pred[0] - gt[0], pred[1] - gt[1])
            if d <= alpha * norm:
                correct += 1
    return correct, total


def pck(pairs: list[EvalPair], alpha: float, normalizer: str = "max_side") -> float:
    if alpha <= 0:
        raise UndefinedMetricError(f"PCK threshold must be positive, got {alpha}")
    correct, total = pck_counts(pairs, alpha, normalizer)
    if total == 0:
        raise UndefinedMetricError("PCK over an empty keypoint set")
    return correct / total


def oks(pair: EvalPair, k) -> float:
    """`k` is a scalar constant or a per-keypoint-name mapping."""
    area = pair.area
    if area <= 0:
        raise UndefinedMetricError(f"instance area {area} must be positive")
    vals = []
    for kp in pair.record.keypoints:
        if not kp.labeled:
            continue
        ki = k.get(kp.name) if isinstance(k, dict) else k
        pred = pair.predictions.get(kp.name)
        if pred is None:
            vals.append(0.0)
            continue
        gt = pair.record.keypoint_px(kp.name)
        d2 = (pred[0] - gt[0]) ** 2 + (pred[1] - gt[1]) ** 2
        vals.append(math.exp(-d2 / (2.0 * area * ki * ki)))
    if not vals:
        raise UndefinedMetricError("OKS over an instance with no labeled keypoints")
    return float(np.mean(vals))


def ap_ar(scored: list[tuple[float, float]],
          thresholds=OKS_THRESHOLDS) -> tuple[dict, float, float]:
    """`scored` is [(oks, confidence)] per instance.

    -> ({threshold: ap}, mean ap, ar). Ranking is by confidence descending,
    stable in input order; precision is 101-point interpolated.
    """
    if not scored:
        raise UndefinedMetricError("AP/AR over an empty instance set")
    oks_vals = np.array([s[0] for s in scored], dtype=np.float64)
    confs = np.array([s[1] for s in scored], dtype=np.float64)
    order = np.argsort(-confs, kind="stable")
    oks_sorted = oks_vals[order]
    n = len(scored)
    # i/100 (not linspace) so levels equal simple recall fractions bit-exactly
    recall_levels = np.arange(101) / 100.0
    ap_per = {}
    recalls_full = []
    for t in thresholds:
        tp = (oks_sorted >= t).astype(np.float64)
        cum_tp = np.cumsum(tp)
        precision = cum_tp / np.arange(1, n + 1)
        recall = cum_tp / n
        # precision envelope: best precision at any recall >= r
        env = precision.copy()
        for i in range(n - 2, -1, -1):
            env[i] = max(env[i], env[i + 1])
        interp = np.zeros(101)
        idx = np.searchsorted(recall, recall_levels, side="left")
        valid = idx < n
        interp[valid] = env[idx[valid]]
        ap_per[float(t)] = float(interp.mean())
        recalls_full.append(recall[-1] if n else 0.0)
    mean_ap = float(np.mean(list(ap_per.values())))
    ar = float(np.mean(recalls_full))
    return ap_per, mean_ap, ar


def normalize_name(s: str) -> str:
    return " ".join(s.strip().lower().split())


def semantic_accuracy(predicted: list[str], truth: list[str]) -> float:
    """Normalized exact-match of the keypoint-name clause."""
    if not predicted or len(predicted) != len(truth):
        raise UndefinedMetricError("semantic accuracy needs matched nonempty lists")
    hits = sum(1 for p, t in zip(predicted, truth)
               if normalize_name(p) == normalize_name(t))
    return hits / len(predicted)


@dataclass
class MetricsReport:
    pck: dict[float, float] = field(default_factory=dict)
    oks_ap: float = 0.0
    oks_ap50: float = 0.0
    oks_ap75: float = 0.0
    ar: float = 0.0
    semantic_accuracy: float | None = None
    per_category: dict[str, dict] = field(default_factory=dict)
    n_instances: int = 0
    n_keypoints: int = 0
    n_failures: int = 0

    def rows(self) -> list[tuple[str, str, float]]:
        out = []
        for alpha in sorted(self.pck):
            out.append((f"pck@{alpha:g}", "all", self.pck[alpha]))
        out.append(("oks_ap", "all", self.oks_ap))
        out.append(("oks_ap50", "all", self.oks_ap50))
        out.append(("oks_ap75", "all", self.oks_ap75))
        out.append(("ar", "all", self.ar))
        if self.semantic_accuracy is not None:
            out.append(("semantic_accuracy", "all", self.semantic_accuracy))
        for cat in sorted(self.per_category):
            for metric, value in sorted(self.per_category[cat].items()):
                out.append((metric, cat, value))
        out.append(("instances", "all", float(self.n_instances)))
        out.append(("keypoints", "all", float(self.n_keypoints)))
        out.append(("generation_failures", "all", float(self.n_failures)))
        return out


def compute_report(pairs: list[EvalPair], alphas, k,
                   semantic: tuple[list[str], list[str]] | None = None,
                   normalizer: str = "max_side", n_failures: int = 0) -> MetricsReport:
    if not pairs:
        raise UndefinedMetricError("report over an empty evaluation set")
    report = MetricsReport(n_instances=len(pairs), n_failures=n_failures)
    report.n_keypoints = pck_counts(pairs, max(alphas), normalizer)[1]
    for alpha in alphas:
        report.pck[float(alpha)] = pck(pairs, alpha, normalizer)

    def _conf(p: EvalPair) -> float:
        vals = [c for _, _, c in p.predictions.values()]
        return float(np.mean(vals)) if vals else 0.0

    scored = [(oks(p, k), _conf(p)) for p in pairs]
    ap_per, mean_ap, ar = ap_ar(scored)
    report.oks_ap = mean_ap
    report.oks_ap50 = ap_per[0.5]
    report.oks_ap75 = ap_per[0.75]
    report.ar = ar
    if semantic is not None:
        report.semantic_accuracy = semantic_accuracy(semantic[0], semantic[1])
    cats = sorted({p.record.category for p in pairs})
    if len(cats) > 1:
        for cat in cats:
            sub = [p for p in pairs if p.record.category == cat]
            entry = {f"pck@{a:g}": pck(sub, a, normalizer) for a in alphas}
            sub_scored = [(oks(p, k), _conf(p)) for p in sub]
            _, entry["oks_ap"], entry["ar"] = ap_ar(sub_scored)
            report.per_category[cat] = entry
    return report
