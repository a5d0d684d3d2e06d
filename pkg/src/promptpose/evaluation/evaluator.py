"""Model-driven evaluation over dataset records.

Every labeled keypoint of every record becomes one query; queries run in
batches through greedy decoding (the multi-keypoint batched regime), and
predictions are mapped back through the crop transform into scene pixels for
metric computation. Failed generations fall back to the crop center with zero
confidence and are counted in the report.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..config import RunConfig
from ..lm.decoding import GreedyDecoder
from ..numerics import Rng, derive_seed
from ..pipeline import KeypointModel
from ..tasks.records import InstanceRecord, TaskSample, KIND_KSU
from ..tasks.samples import make_sample
from ..tasks.synth import is_mirror_keypoint
from .metrics import EvalPair, MetricsReport, compute_report

_EVAL_STREAM = 0xE7A1


@dataclass
class SampleOutcome:
    sample: TaskSample
    record_index: int
    semantic: str = ""
    pred_scene: tuple[float, float] = (0.0, 0.0)
    confidence: float = 0.0
    ok: bool = True


@dataclass
class EvalOutcome:
    report: MetricsReport
    pairs: list[EvalPair] = field(default_factory=list)
    samples: list[SampleOutcome] = field(default_factory=list)
    n_failures: int = 0


def _support_partner(records: list[InstanceRecord], idx: int,
                     by_family: dict[str, list[int]]) -> int:
    """Deterministic support pairing: the next record of the same family."""
    pool = by_family[records[idx].category]
    pos = pool.index(idx)
    return pool[(pos + 1) % len(pool)]


def build_eval_samples(records: list[InstanceRecord], kind: str, cfg: RunConfig,
                       mirror_only: bool = False,
                       seed: int = 0) -> list[tuple[TaskSample, int]]:
    by_family: dict[str, list[int]] = {}
    for i, rec in enumerate(records):
        by_family.setdefault(rec.category, []).append(i)
    out = []
    for i, rec in enumerate(records):
        support = None
        if kind == "visual":
            support = records[_support_partner(records, i, by_family)]
        for kp_idx, kp in enumerate(rec.keypoints):
            if not kp.labeled:
                continue
            if mirror_only and not is_mirror_keypoint(rec.category, kp.name):
                continue
            if kind == "visual" and not support.keypoints[kp_idx].labeled:
                continue
            rng = Rng(derive_seed(seed, _EVAL_STREAM, i, kp_idx))
            sample = make_sample(kind, rec, support, kp_idx, rng, cfg.model,
                                 pad=cfg.data.pad, use_description=False)
            out.append((sample, i))
    return out


def evaluate_model(model: KeypointModel, records: list[InstanceRecord], kind: str,
                   cfg: RunConfig, mirror_only: bool | None = None,
                   seed: int = 0) -> EvalOutcome:
    if mirror_only is None:
        mirror_only = cfg.eval.mirror_only
    pending = build_eval_samples(records, kind, cfg, mirror_only=mirror_only, seed=seed)
    decoder = GreedyDecoder(model.lm, itd=cfg.model.itd,
                            max_tokens=cfg.model.max_gen_tokens)
    outcomes: list[SampleOutcome] = []
    n_fail = 0
    bs = max(1, cfg.eval.batch)
    for start in range(0, len(pending), bs):
        chunk = pending[start:start + bs]
        samples = [s for s, _ in chunk]
        prefix, prefix_valid = model.build_prefix(samples)
        instr_ids = [model.vocab.encode(s.instruction) for s in samples]
        echo = [(s.support[1].x, s.support[1].y) if s.kind == KIND_KSU else None
                for s in samples]
        results = decoder.generate_batch(prefix, instr_ids, echo_xy=echo,
                                         prefix_valid=prefix_valid)
        for (sample, rec_idx), res in zip(chunk, results):
            oc = SampleOutcome(sample=sample, record_index=rec_idx)
            oc.semantic = res.semantic
            if res.ok and res.position is not None:
                xy = np.array([res.position.x, res.position.y])
                oc.confidence = max(0.0, min(1.0, res.confidence))
            else:
                xy = np.array([0.5, 0.5])
                oc.confidence = 0.0
                oc.ok = False
                n_fail += 1
            px = sample.query_transform.crop_to_scene(xy)
            oc.pred_scene = (float(px[0]), float(px[1]))
            outcomes.append(oc)

    # group predictions per record
    preds_by_record: dict[int, dict] = {}
    for oc in outcomes:
        preds_by_record.setdefault(oc.record_index, {})[oc.sample.keypoint_name] = (
            oc.pred_scene[0], oc.pred_scene[1], oc.confidence)
    pairs = []
    for idx, preds in sorted(preds_by_record.items()):
        rec = records[idx]
        if mirror_only:
            # restrict ground truth to the queried (mirror) keypoints
            rec = _filtered_record(rec, set(preds))
        pairs.append(EvalPair(record=rec, predictions=preds))

    semantic = None
    if kind == KIND_KSU:
        semantic = ([oc.semantic for oc in outcomes],
                    [oc.sample.keypoint_name for oc in outcomes])
    report = compute_report(pairs, cfg.eval.alpha_list(), cfg.eval.oks_k,
                            semantic=semantic, normalizer=cfg.eval.pck_normalizer,
                            n_failures=n_fail)
    return EvalOutcome(report=report, pairs=pairs, samples=outcomes, n_failures=n_fail)


def _filtered_record(rec: InstanceRecord, names: set) -> InstanceRecord:
    kps = [kp for kp in rec.keypoints if kp.name in names]
    return InstanceRecord(image=rec.image, bbox=rec.bbox, category=rec.category,
                          keypoints=kps, skeleton=[], record_id=rec.record_id)
