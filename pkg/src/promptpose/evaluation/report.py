"""Report rendering: CSV rows, a plain-text table, and matplotlib figures
(metric summary, qualitative overlays, training loss curve) written next to
the delimited output."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from ..tasks.records import InstanceRecord
from .metrics import MetricsReport


def write_report_csv(report: MetricsReport, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "category", "value"])
        for metric, cat, value in report.rows():
            writer.writerow([metric, cat, f"{value:.6f}"])
    return path


def format_table(report: MetricsReport, title: str = "evaluation") -> str:
    rows = report.rows()
    w_metric = max(len(r[0]) for r in rows) + 2
    w_cat = max(len(r[1]) for r in rows) + 2
    lines = [title, "-" * (w_metric + w_cat + 10)]
    for metric, cat, value in rows:
        lines.append(f"{metric:<{w_metric}}{cat:<{w_cat}}{value:>10.4f}")
    return "\n".join(lines) + "\n"


def write_report_table(report: MetricsReport, path, title: str = "evaluation") -> Path:
    path = Path(path)
    path.write_text(format_table(report, title), encoding="utf-8")
    return path


def save_metrics_figure(report: MetricsReport, path, title: str = "evaluation") -> Path:
    path = Path(path)
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    alphas = sorted(report.pck)
    axes[0].bar([f"@{a:g}" for a in alphas], [report.pck[a] for a in alphas],
                color="#4878d0")
    axes[0].set_ylim(0, 1.05)
    axes[0].set_ylabel("PCK")
    axes[0].set_title(f"{title}: PCK")
    if report.per_category:
        cats = sorted(report.per_category)
        key = f"pck@{max(alphas):g}"
        axes[1].bar(cats, [report.per_category[c].get(key, 0.0) for c in cats],
                    color="#d65f5f")
        axes[1].set_ylim(0, 1.05)
        axes[1].tick_params(axis="x", rotation=30)
        axes[1].set_title(f"per category {key}")
    else:
        axes[1].bar(["AP", "AP50", "AP75", "AR"],
                    [report.oks_ap, report.oks_ap50, report.oks_ap75, report.ar],
                    color="#d65f5f")
        axes[1].set_ylim(0, 1.05)
        axes[1].set_title("OKS AP / AR")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def save_overlay(record: InstanceRecord, predictions: dict, path,
                 show_skeleton: bool = True, title: str = "") -> Path:
    """Query scene with ground truth (circles) vs predictions (crosses)."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.imshow(record.image)
    x, y, w, h = record.bbox
    ax.add_patch(plt.Rectangle((x, y), w, h, fill=False, color="#cccc00", lw=1.0))
    if show_skeleton and record.skeleton:
        for a, b in record.skeleton:
            if a < len(record.keypoints) and b < len(record.keypoints):
                ka, kb = record.keypoints[a], record.keypoints[b]
                if ka.labeled and kb.labeled:
                    pa = record.keypoint_px(ka.name)
                    pb = record.keypoint_px(kb.name)
                    ax.plot([pa[0], pb[0]], [pa[1], pb[1]], color="#44cc44",
                            lw=1.0, alpha=0.6)
    for kp in record.keypoints:
        if not kp.labeled:
            continue
        px = record.keypoint_px(kp.name)
        ax.plot(px[0], px[1], "o", ms=8, mfc="none", mec="#22aa22", mew=1.6)
        pred = predictions.get(kp.name)
        if pred is not None:
            ax.plot(pred[0], pred[1], "x", ms=8, color="#dd2222", mew=1.8)
            ax.annotate(kp.name, (pred[0], pred[1]), fontsize=6, color="#dd2222",
                        xytext=(2, 2), textcoords="offset points")
    ax.set_title(title or record.record_id, fontsize=9)
    ax.set_axis_off()
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def save_loss_curve(step_losses: list[tuple[int, float]], path) -> Path:
    path = Path(path)
    fig, ax = plt.subplots(figsize=(7, 4))
    if step_losses:
        steps, losses = zip(*step_losses)
        ax.plot(steps, losses, lw=0.8, color="#4878d0")
        if len(losses) > 20:
            k = max(1, len(losses) // 50)
            smooth = np.convolve(losses, np.ones(2 * k + 1) / (2 * k + 1), mode="valid")
            ax.plot(steps[k:len(steps) - k], smooth, lw=1.6, color="#d65f5f")
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path
