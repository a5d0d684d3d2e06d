"""Evaluation: metrics, the batched evaluator, reports, baselines, ablations."""

from .ablation import DEFAULT_CELLS, cell_config, run_ablation
from .baselines import random_position_pck
from .evaluator import EvalOutcome, build_eval_samples, evaluate_model
from .metrics import (
    OKS_THRESHOLDS,
    EvalPair,
    MetricsReport,
    ap_ar,
    compute_report,
    normalize_name,
    oks,
    pck,
    pck_counts,
    semantic_accuracy,
)
from .report import (
    format_table,
    save_loss_curve,
    save_metrics_figure,
    save_overlay,
    write_report_csv,
    write_report_table,
)

__all__ = [
    "DEFAULT_CELLS", "cell_config", "run_ablation", "random_position_pck",
    "EvalOutcome", "build_eval_samples", "evaluate_model",
    "OKS_THRESHOLDS", "EvalPair", "MetricsReport", "ap_ar", "compute_report",
    "normalize_name", "oks", "pck", "pck_counts", "semantic_accuracy",
    "format_table", "save_loss_curve", "save_metrics_figure", "save_overlay",
    "write_report_csv", "write_report_table",
]
