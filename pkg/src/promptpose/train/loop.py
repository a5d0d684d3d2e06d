"""Training loop over task samples.

Batches mix task kinds; every random choice (kind, records, keypoint,
template) derives from a counter-based stream keyed by (seed, step), so a run
is reproducible and a resumed run continues the exact same sample sequence.
The log is CSV rows of (step, task, loss, lr), with final validation metrics
appended; a loss-curve figure is rendered next to it.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .. import numerics as nm
from ..config import STRATEGY_SPECIAL, RunConfig
from ..errors import ContractError, TrainingDiverged
from ..lm.vocab import Vocabulary
from ..numerics import Rng, derive_seed
from ..pipeline import KeypointModel
from ..tasks.records import InstanceRecord, TaskSample, KIND_VISUAL
from ..tasks.samples import make_sample
from .checkpoint import save_checkpoint
from .losses import LossConfig, combined_loss, lm_loss
from .optim import AdamW

_BATCH_STREAM = 0xB47C


class Trainer:
    def __init__(self, cfg: RunConfig, model: KeypointModel, vocab: Vocabulary,
                 splits: dict[str, list[InstanceRecord]]):
        cfg.validate()
        self.cfg = cfg
        self.model = model
        self.vocab = vocab
        self.splits = splits
        self.records = splits["train"]
        if not self.records:
            raise ContractError("empty training split")
        self.by_family: dict[str, list[InstanceRecord]] = {}
        for rec in self.records:
            self.by_family.setdefault(rec.category, []).append(rec)
        self.families = sorted(self.by_family)
        self.kinds = cfg.train.task_list()
        self.loss_cfg = LossConfig(lambda_pos=cfg.train.lambda_pos,
                                   strategy=cfg.model.strategy,
                                   itd=cfg.model.itd,
                                   l1_reduction=cfg.train.l1_reduction)

    # -- sampling ---------------------------------------------------------------
    def _pick_record(self, rng: Rng) -> InstanceRecord:
        if self.cfg.train.sampling == "uniform":
            family = self.families[rng.integers(0, len(self.families))]
            pool = self.by_family[family]
            return pool[rng.integers(0, len(pool))]
        return self.records[rng.integers(0, len(self.records))]

    def _labeled_indices(self, rec: InstanceRecord) -> list[int]:
        return [i for i, kp in enumerate(rec.keypoints) if kp.labeled]

    def sample_batch(self, step: int) -> list[TaskSample]:
        rng = Rng(derive_seed(self.cfg.train.seed, _BATCH_STREAM, step))
        out = []
        for _ in range(self.cfg.train.batch):
            kind = self.kinds[rng.integers(0, len(self.kinds))]
            query = self._pick_record(rng)
            kp_idx = rng.choice(self._labeled_indices(query))
            support = None
            if kind == KIND_VISUAL:
                pool = self.by_family[query.category]
                for _ in range(10):
                    support = pool[rng.integers(0, len(pool))]
                    if support.keypoints[kp_idx].labeled:
                        break
                else:
                    support = query
            out.append(make_sample(kind, query, support, kp_idx, rng,
                                   self.cfg.model, pad=self.cfg.data.pad))
        return out

    # -- forward + loss -----------------------------------------------------------
    def batch_loss(self, samples: list[TaskSample]):
        """Forward the batch and return the scalar loss tensor."""
        if not samples:
            raise ContractError("empty batch")
        vocab = self.vocab
        model = self.model
        p = model.prefix_len
        dtype = self.cfg.model.dtype

        token_rows = []
        sep_positions = []
        for s in samples:
            instr = vocab.encode(s.instruction)
            answer = vocab.encode(s.target_answer)
            token_rows.append([vocab.bos] + instr + [vocab.sep] + answer + [vocab.eos])
            sep_positions.append(1 + len(instr))
        tmax = max(len(t) for t in token_rows)
        b = len(samples)
        ids = np.full((b, tmax), vocab.eos, dtype=np.int64)
        text_valid = np.zeros((b, tmax), dtype=bool)
        for i, row in enumerate(token_rows):
            ids[i, :len(row)] = row
            text_valid[i, :len(row)] = True

        prefix, prefix_valid = model.build_prefix(samples)
        key_valid = np.concatenate([prefix_valid, text_valid], axis=1)
        seq = nm.concat([prefix, model.lm.embed_tokens(ids)], axis=1)
        states = model.lm.transform(seq, p, key_valid=key_valid)

        # supervised positions: inputs from the separator up to the second-to-last
        # token predict the answer tokens (everything after the first separator)
        bi, pj, tgt = [], [], []
        for i, row in enumerate(token_rows):
            for j in range(sep_positions[i], len(row) - 1):
                bi.append(i)
                pj.append(p + j)
                tgt.append(row[j + 1])
        sup_states = nm.gather_rows(states, np.array(bi), np.array(pj))
        logits = model.lm.logits(sup_states)
        ce = lm_loss(logits, np.array(tgt), np.ones(len(tgt), dtype=bool))

        if self.cfg.model.strategy == STRATEGY_SPECIAL:
            kpt_id = vocab.kpt
            kbi, kpj, kt = [], [], []
            for i, (s, row) in enumerate(zip(samples, token_rows)):
                if s.target_position is None:
                    continue
                j = row.index(kpt_id)
                kbi.append(i)
                kpj.append(p + j)
                kt.append(s.target_position)
            if kbi:
                u_kpt = nm.gather_rows(states, np.array(kbi), np.array(kpj))
                y = model.lm.pos_head(u_kpt)
                return combined_loss(y, np.array(kt, dtype=dtype), ce, self.loss_cfg)
        return ce

    def train_step(self, samples: list[TaskSample], optim: AdamW) -> tuple[float, float]:
        """One optimization step; -> (loss, applied lr)."""
        loss = self.batch_loss(samples)
        value = float(loss.data)
        if not np.isfinite(value):
            raise TrainingDiverged(
                f"non-finite loss {value}", sample_ids=[s.sample_id for s in samples])
        nm.backward(loss)
        lr = optim.step()
        return value, lr

    # -- the loop -----------------------------------------------------------------
    def run(self, out_dir, resume_from=None, log_name: str = "train_log.csv"):
        """Train for cfg.train.steps steps; returns the final checkpoint path."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        cfg = self.cfg
        optim = AdamW(self.model.trainable_params(), lr=cfg.train.lr,
                      weight_decay=cfg.train.weight_decay, clip=cfg.train.clip,
                      warmup=cfg.train.warmup)
        start_step = 0
        if resume_from is not None:
            from .checkpoint import check_model_compat, load_checkpoint
            manifest, arrays = load_checkpoint(resume_from)
            check_model_compat(manifest, cfg)
            if manifest["vocab_sha256"] != self.vocab.sha256():
                raise TrainingDiverged("vocabulary hash differs from resume checkpoint")
            self.model.load_state({k: v for k, v in arrays.items()
                                   if not k.startswith("optim.")})
            optim.load_state(arrays, manifest["optim_step"])
            start_step = manifest["step"]

        task_label = self.kinds[0] if len(self.kinds) == 1 else "mixed"
        log_rows = []
        losses = []
        ckpt_path = out_dir / "checkpoint"
        for step in range(start_step, cfg.train.steps):
            samples = self.sample_batch(step)
            loss, lr = self.train_step(samples, optim)
            losses.append((step, loss))
            log_rows.append((step, task_label, f"{loss:.6f}", f"{lr:.6g}"))
            if cfg.train.ckpt_every and (step + 1) % cfg.train.ckpt_every == 0 \
                    and step + 1 < cfg.train.steps:
                save_checkpoint(out_dir / f"checkpoint-step{step + 1:06d}", self.model,
                                cfg, self.vocab, step + 1, optim)
        save_checkpoint(ckpt_path, self.model, cfg, self.vocab, cfg.train.steps, optim)

        # final validation metrics appended to the log
        if self.splits.get("val"):
            from ..evaluation.evaluator import evaluate_model
            for kind in self.kinds:
                outcome = evaluate_model(self.model, self.splits["val"], kind, cfg)
                if kind == "ksu":
                    metric = f"{outcome.report.semantic_accuracy:.6f}"
                    log_rows.append((cfg.train.steps, f"val-{kind}-semacc", metric, "0"))
                else:
                    metric = f"{outcome.report.pck.get(0.2, 0.0):.6f}"
                    log_rows.append((cfg.train.steps, f"val-{kind}-pck0.2", metric, "0"))

        log_path = out_dir / log_name
        with open(log_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "task", "loss", "lr"])
            writer.writerows(log_rows)

        from ..evaluation.report import save_loss_curve
        save_loss_curve(losses, out_dir / "loss_curve.png")
        return ckpt_path
