#!/usr/bin/env python3
"""Pilot training run: watch PCK progress to pick default budgets."""
import argparse
import sys
import time

import numpy as np

from promptpose.config import RunConfig
from promptpose.evaluation.evaluator import evaluate_model
from promptpose.pipeline import KeypointModel, default_vocabulary
from promptpose.tasks.dataset_io import generate_splits
from promptpose.train.loop import Trainer
from promptpose.train.optim import AdamW


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--count", type=int, default=1000)
    ap.add_argument("--steps", type=int, default=3000)
    ap.add_argument("--eval-every", type=int, default=500)
    ap.add_argument("--eval-records", type=int, default=60)
    ap.add_argument("--tasks", type=str, default="ksu,visual,textual")
    ap.add_argument("--strategy", type=str, default="numerical-text")
    ap.add_argument("--lr", type=float, default=2e-4)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--eval-task", type=str, default="textual")
    args = ap.parse_args()

    cfg = RunConfig()
    cfg.data.count = args.count
    cfg.train.steps = args.steps
    cfg.train.tasks = args.tasks
    cfg.train.lr = args.lr
    cfg.train.seed = args.seed
    cfg.model.strategy = args.strategy
    cfg.validate()

    t0 = time.time()
    splits = generate_splits(cfg.data)
    print(f"data: {len(splits['train'])} train, gen {time.time()-t0:.0f}s", flush=True)
    vocab = default_vocabulary(cfg.model.strategy)
    model = KeypointModel(cfg.model, vocab, seed=cfg.train.seed)
    trainer = Trainer(cfg, model, vocab, splits)
    optim = AdamW(model.trainable_params(), lr=cfg.train.lr,
                  weight_decay=cfg.train.weight_decay,
                  clip=cfg.train.clip, warmup=cfg.train.warmup)
    eval_recs = splits["val"][:args.eval_records]
    t_start = time.time()
    for step in range(cfg.train.steps):
        loss, lr = trainer.train_step(trainer.sample_batch(step), optim)
        if (step + 1) % 100 == 0:
            rate = (time.time() - t_start) / (step + 1)
            print(f"step {step+1} loss {loss:.4f} ({rate*1000:.0f} ms/step)", flush=True)
        if (step + 1) % args.eval_every == 0:
            t0 = time.time()
            out = evaluate_model(model, eval_recs, args.eval_task, cfg)
            print(f"  eval@{step+1}: pck0.1={out.report.pck[0.1]:.3f} "
                  f"pck0.2={out.report.pck[0.2]:.3f} fail={out.n_failures}"
                  f" ({time.time()-t0:.0f}s)", flush=True)
    print("done", flush=True)


if __name__ == "__main__":
    sys.exit(main())
