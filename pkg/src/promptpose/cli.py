"""Command-line interface.

Subcommands: gen-data, train, eval, infer, ablate. Every run is reproducible
from one INI config file; --set section.key=value flags override file values
(flags win). The effective config is written into each output directory.

Exit codes: 0 success, 2 usage errors, 1 anything else; failures print one
machine-parsable line `<ErrorClass>: <message>` to stderr.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from .config import (
    RunConfig,
    apply_overrides,
    config_field_help,
    from_ini,
    to_ini,
)
from .encoders import ImagePatch, KeypointPrompt
from .errors import PromptPoseError, UsageError
from .lm.decoding import format_position_text
from .pipeline import KeypointModel, default_vocabulary
from .tasks.crop import crop_instance
from .tasks.records import InstanceRecord, TaskSample, KIND_KSU, KIND_TEXTUAL, KIND_VISUAL


def _config_epilog() -> str:
    lines = ["configuration fields (override with --set section.key=value):"]
    for key, default, typ in config_field_help():
        lines.append(f"  {key:<28} {typ:<6} default: {default}")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="promptpose",
        description="prompt-driven keypoint detection on synthetic scenes",
        epilog=_config_epilog(),
        formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=str, default=None, help="INI config file")
        p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="SECTION.KEY=VALUE", help="config override (flags win)")

    p = sub.add_parser("gen-data", help="render the synthetic dataset splits")
    common(p)
    p.add_argument("--out", type=str, default=None, help="dataset directory")
    p.add_argument("--force", action="store_true",
                   help="overwrite a non-empty output directory")

    p = sub.add_parser("train", help="train a model")
    common(p)
    p.add_argument("--data", type=str, default=None, help="dataset directory")
    p.add_argument("--out", type=str, default=None, help="run directory")
    p.add_argument("--resume", type=str, default=None, help="checkpoint to resume from")

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    common(p)
    p.add_argument("--checkpoint", type=str, required=True)
    p.add_argument("--data", type=str, default=None)
    p.add_argument("--out", type=str, default=None)
    p.add_argument("--task", choices=[KIND_KSU, KIND_VISUAL, KIND_TEXTUAL],
                   default=KIND_TEXTUAL)
    p.add_argument("--split", choices=["train", "val", "test"], default="test")
    p.add_argument("--overlays", type=int, default=None,
                   help="write this many qualitative overlay images")

    p = sub.add_parser("infer", help="single-image inference")
    common(p)
    p.add_argument("--checkpoint", type=str, required=True)
    p.add_argument("--image", type=str, required=True)
    p.add_argument("--mode", choices=[KIND_KSU, KIND_VISUAL, KIND_TEXTUAL], required=True)
    p.add_argument("--point", type=float, nargs=2, metavar=("X", "Y"), default=None,
                   help="normalized prompt coordinate ([0,1], ksu/visual modes)")
    p.add_argument("--support", type=str, default=None, help="support image (visual mode)")
    p.add_argument("--keypoint", action="append", default=[],
                   help="keypoint name (textual mode; repeat to batch)")
    p.add_argument("--description", type=str, default=None,
                   help="keypoint description (textual mode)")
    p.add_argument("--out", type=str, default=None, help="overlay path (default overlay.png)")

    p = sub.add_parser("ablate", help="run the ablation grid")
    common(p)
    p.add_argument("--data", type=str, default=None)
    p.add_argument("--out", type=str, default=None)
    p.add_argument("--seeds", type=str, default="0,1,2")
    p.add_argument("--no-train", action="store_true",
                   help="fail instead of training missing cells")
    return parser


def _load_config(args) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        text = Path(args.config).read_text(encoding="utf-8")
        cfg = from_ini(text, base=cfg)
    pairs = []
    for item in args.overrides:
        if "=" not in item:
            raise UsageError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        pairs.append((key.strip(), value.strip()))
    apply_overrides(cfg, pairs)
    return cfg.validate()


def _write_effective_config(cfg: RunConfig, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.ini").write_text(to_ini(cfg), encoding="utf-8")


# -- commands -------------------------------------------------------------------

def cmd_gen_data(args) -> int:
    from .tasks.dataset_io import generate_splits, write_dataset
    cfg = _load_config(args)
    out_dir = Path(args.out or cfg.paths.data_dir)
    if out_dir.exists() and any(out_dir.iterdir()) and not args.force:
        raise UsageError(f"output directory {out_dir} is not empty (use --force)")
    splits = generate_splits(cfg.data)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "gen_config.ini").write_text(to_ini(cfg, include_paths=False),
                                            encoding="utf-8")
    for split, records in splits.items():
        write_dataset(out_dir, records, split)
        print(f"{split}: {len(records)} records")
    return 0


def cmd_train(args) -> int:
    from .tasks.dataset_io import load_splits
    from .train.loop import Trainer
    cfg = _load_config(args)
    data_dir = Path(args.data or cfg.paths.data_dir)
    out_dir = Path(args.out or cfg.paths.run_dir)
    splits = load_splits(data_dir)
    _write_effective_config(cfg, out_dir)
    vocab = default_vocabulary(cfg.model.strategy)
    model = KeypointModel(cfg.model, vocab, seed=cfg.train.seed)
    trainer = Trainer(cfg, model, vocab, splits)
    ckpt = trainer.run(out_dir, resume_from=args.resume)
    print(f"checkpoint: {ckpt}")
    print(f"log: {out_dir / 'train_log.csv'}")
    return 0


def cmd_eval(args) -> int:
    from .evaluation.evaluator import evaluate_model
    from .evaluation.report import (
        format_table, save_metrics_figure, save_overlay,
        write_report_csv, write_report_table,
    )
    from .tasks.dataset_io import load_splits
    from .train.checkpoint import restore_model
    cfg_cli = _load_config(args)
    model, cfg, _, _ = restore_model(args.checkpoint)
    cfg.eval = cfg_cli.eval
    cfg.paths = cfg_cli.paths
    data_dir = Path(args.data or cfg.paths.data_dir)
    out_dir = Path(args.out or cfg.paths.run_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = load_splits(data_dir)[args.split]
    outcome = evaluate_model(model, records, args.task, cfg)
    title = f"{args.task} on {args.split}"
    write_report_csv(outcome.report, out_dir / "report.csv")
    write_report_table(outcome.report, out_dir / "report.txt", title)
    save_metrics_figure(outcome.report, out_dir / "report.png", title)
    n_overlays = args.overlays if args.overlays is not None else cfg.eval.overlays
    for pair in outcome.pairs[:max(0, n_overlays)]:
        save_overlay(pair.record, pair.predictions,
                     out_dir / f"overlay_{pair.record.record_id}.png")
    print(format_table(outcome.report, title))
    return 0


def _read_image(path: str) -> np.ndarray:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"image file not found: {p}")
    return np.asarray(Image.open(p).convert("RGB"), dtype=np.uint8)


def _full_image_patch(image: np.ndarray, input_size: int):
    h, w = image.shape[:2]
    rec = InstanceRecord(image=image, bbox=(0.0, 0.0, float(w), float(h)),
                         category="unknown", keypoints=[])
    return crop_instance(rec, pad=0.0, out_size=input_size)


def cmd_infer(args) -> int:
    from .evaluation.report import save_overlay
    from .lm.decoding import GreedyDecoder
    from .tasks.samples import TEMPLATES
    from .train.checkpoint import restore_model
    model, cfg, _, _ = restore_model(args.checkpoint)
    image = _read_image(args.image)
    qpatch, qtf = _full_image_patch(image, cfg.model.input_size)

    def check_point(pt):
        if pt is None:
            raise UsageError(f"--point is required for {args.mode} mode")
        if not (0.0 <= pt[0] <= 1.0 and 0.0 <= pt[1] <= 1.0):
            raise UsageError(f"--point {pt} outside [0,1]^2")

    samples: list[TaskSample] = []
    labels: list[str] = []
    if args.mode == KIND_KSU:
        check_point(args.point)
        prompt = KeypointPrompt(args.point[0], args.point[1])
        samples.append(TaskSample(kind=KIND_KSU, query=qpatch, support=(qpatch, prompt),
                                  instruction=TEMPLATES[KIND_KSU][0], target_answer="",
                                  target_position=None, query_transform=qtf))
        labels.append(f"point ({args.point[0]:.3f}, {args.point[1]:.3f})")
    elif args.mode == KIND_VISUAL:
        if args.support is None:
            raise UsageError("--support is required for visual mode")
        check_point(args.point)
        spatch, _ = _full_image_patch(_read_image(args.support), cfg.model.input_size)
        prompt = KeypointPrompt(args.point[0], args.point[1])
        samples.append(TaskSample(kind=KIND_VISUAL, query=qpatch, support=(spatch, prompt),
                                  instruction=TEMPLATES[KIND_VISUAL][0], target_answer="",
                                  target_position=None, query_transform=qtf))
        labels.append(f"support point ({args.point[0]:.3f}, {args.point[1]:.3f})")
    else:
        prompts = list(args.keypoint)
        if args.description:
            prompts.append(args.description)
        if not prompts:
            raise UsageError("textual mode needs --keypoint and/or --description")
        for p in prompts:
            samples.append(TaskSample(
                kind=KIND_TEXTUAL, query=qpatch, support=None,
                instruction=TEMPLATES[KIND_TEXTUAL][0].format(p=p), target_answer="",
                target_position=None, query_transform=qtf))
            labels.append(p)

    decoder = GreedyDecoder(model.lm, itd=cfg.model.itd,
                            max_tokens=cfg.model.max_gen_tokens)
    prefix, prefix_valid = model.build_prefix(samples)
    instr_ids = [model.vocab.encode(s.instruction) for s in samples]
    echo = [(s.support[1].x, s.support[1].y) if s.kind == KIND_KSU else None
            for s in samples]
    results = decoder.generate_batch(prefix, instr_ids, echo_xy=echo,
                                     prefix_valid=prefix_valid)
    predictions = {}
    for label, res in zip(labels, results):
        if not res.ok:
            print(f"{label}: generation failed ({res.text(model.vocab)!r})")
            continue
        pos_txt = format_position_text(res.position)
        px = qtf.crop_to_scene(res.position.as_array())
        clause = res.semantic or args.mode
        print(f"{label}: {clause} {pos_txt}  [{px[0]:.1f}px, {px[1]:.1f}px]")
        predictions[res.semantic or label] = (float(px[0]), float(px[1]), res.confidence)

    h, w = image.shape[:2]
    overlay_rec = InstanceRecord(image=image, bbox=(0.0, 0.0, float(w), float(h)),
                                 category="input", keypoints=[])
    out_path = Path(args.out or "overlay.png")
    save_overlay(overlay_rec, predictions, out_path, title=f"{args.mode} inference")
    print(f"overlay: {out_path}")
    return 0


def cmd_ablate(args) -> int:
    from .evaluation.ablation import run_ablation
    from .tasks.dataset_io import load_splits
    cfg = _load_config(args)
    data_dir = Path(args.data or cfg.paths.data_dir)
    out_dir = Path(args.out or cfg.paths.run_dir)
    splits = load_splits(data_dir)
    _write_effective_config(cfg, out_dir)
    seeds = tuple(int(s) for s in args.seeds.split(",") if s.strip())
    results = run_ablation(cfg, splits, out_dir, seeds=seeds,
                           train_if_missing=not args.no_train)
    for name, entry in results.items():
        print(f"{name}: mean PCK@0.2 = {entry['mean']:.4f}")
    return 0


_COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "infer": cmd_infer,
    "ablate": cmd_ablate,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except UsageError as e:
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return 2
    except PromptPoseError as e:
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
