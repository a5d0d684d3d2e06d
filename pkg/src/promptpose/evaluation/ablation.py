"""Ablation harness: {identify-then-detect on/off} x {cross-attention vs
average-pooling extraction} x {visual vs visual+textual prompting}.

Each grid cell trains its own model (visual-prompt task only, so the probed
mechanism carries the localization burden) across several seeds, then scores
visual-prompt detection on the mirror-ambiguous slice of the test split.
Existing cell checkpoints are reused; with training disabled a missing
checkpoint is a named error.
"""

from __future__ import annotations

import copy
import csv
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

from ..config import EXTRACTOR_AVGPOOL, RunConfig
from ..errors import CheckpointError
from ..pipeline import KeypointModel, default_vocabulary
from ..tasks.records import KIND_VISUAL
from .evaluator import evaluate_model

DEFAULT_CELLS = (
    ("itd-xattn", {}),
    ("noitd-xattn", {"itd": False}),
    ("itd-avgpool", {"extractor": EXTRACTOR_AVGPOOL}),
    ("itd-xattn-text", {"visual_textual": True}),
)


def cell_config(base: RunConfig, overrides: dict, seed: int) -> RunConfig:
    cfg = copy.deepcopy(base)
    for key, value in overrides.items():
        setattr(cfg.model, key, value)
    cfg.train.seed = seed
    cfg.train.tasks = "visual"
    return cfg.validate()


def run_ablation(base_cfg: RunConfig, splits: dict, out_dir,
                 seeds=(0, 1, 2), cells=DEFAULT_CELLS,
                 train_if_missing: bool = True, alpha: float = 0.2) -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    results: dict[str, dict] = {}
    for name, overrides in cells:
        per_seed = {}
        for seed in seeds:
            cell_dir = out_dir / f"{name}-s{seed}"
            ckpt = cell_dir / "checkpoint"
            cfg = cell_config(base_cfg, overrides, seed)
            if (ckpt / "manifest.json").exists():
                from ..train.checkpoint import restore_model
                model, cfg, _, _ = restore_model(ckpt)
            elif train_if_missing:
                from ..train.loop import Trainer
                vocab = default_vocabulary(cfg.model.strategy)
                model = KeypointModel(cfg.model, vocab, seed=seed)
                Trainer(cfg, model, vocab, splits).run(cell_dir)
            else:
                raise CheckpointError(f"missing checkpoint for ablation cell "
                                      f"{name!r} seed {seed} under {ckpt}")
            outcome = evaluate_model(model, splits["test"], KIND_VISUAL, cfg,
                                     mirror_only=True, seed=seed)
            per_seed[seed] = outcome.report.pck[alpha]
        results[name] = {
            "seeds": per_seed,
            "mean": sum(per_seed.values()) / len(per_seed),
        }
    _write_outputs(results, out_dir, seeds, alpha)
    return results


def _write_outputs(results: dict, out_dir: Path, seeds, alpha: float) -> None:
    csv_path = out_dir / "ablation.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["cell"] + [f"seed{s}" for s in seeds] + ["mean"])
        for name, entry in results.items():
            writer.writerow([name] + [f"{entry['seeds'][s]:.6f}" for s in seeds]
                            + [f"{entry['mean']:.6f}"])

    lines = [f"ablation: visual-prompt PCK@{alpha:g} on the mirror-ambiguous split", ""]
    width = max(len(n) for n in results) + 2
    for name, entry in results.items():
        seeds_txt = "  ".join(f"{entry['seeds'][s]:.4f}" for s in seeds)
        lines.append(f"{name:<{width}}{seeds_txt}  mean={entry['mean']:.4f}")
    (out_dir / "ablation.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")

    fig, ax = plt.subplots(figsize=(7, 4))
    names = list(results)
    means = [results[n]["mean"] for n in names]
    ax.bar(names, means, color="#4878d0")
    for i, name in enumerate(names):
        for s in seeds:
            ax.plot(i, results[name]["seeds"][s], "o", ms=4, color="#333333", alpha=0.7)
    ax.set_ylabel(f"PCK@{alpha:g}")
    ax.set_ylim(0, 1.05)
    ax.tick_params(axis="x", rotation=20)
    fig.tight_layout()
    fig.savefig(out_dir / "ablation.png", dpi=110)
    plt.close(fig)
