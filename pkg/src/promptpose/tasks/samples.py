"""Instruction templates and TaskSample rendering.

Each task kind has four instruction paraphrases, chosen per sample by seed so
no single template is overfit. Textual prompting fills the slot with either
the keypoint name or its longer description; visual prompting can optionally
name the keypoint too (the combined visual+textual mode).

Answers follow the identify-then-detect layout: the keypoint name clause, a
separator, then the position (coordinate digits, or the keypoint marker token
whose latent feeds the regression head). The non-ItD ablation drops the
clause. Semantic-understanding answers are the name alone.
"""

from __future__ import annotations

import numpy as np

from ..config import STRATEGY_SPECIAL, ModelConfig
from ..encoders import KeypointPrompt
from ..errors import ContractError
from ..lm.decoding import format_position_text
from ..lm.vocab import KPT, SEP
from ..numerics import Rng
from .crop import crop_instance, keypoint_crop_position
from .records import InstanceRecord, TaskSample, KIND_KSU, KIND_TEXTUAL, KIND_VISUAL
from .synth import SCHEMAS, is_mirror_keypoint

TEMPLATES = {
    KIND_KSU: (
        "name the keypoint at the marked position",
        "what keypoint is marked in the image",
        "identify the keypoint indicated by the prompt",
        "which keypoint does the marker point to",
    ),
    KIND_VISUAL: (
        "locate in the query image the keypoint marked in the support image",
        "find the corresponding keypoint in the query image",
        "where in the query image is the marked keypoint",
        "detect the support keypoint in the query image",
    ),
    "visual_textual": (
        "locate the {p} marked in the support image in the query image",
        "find the {p} shown by the support prompt in the query image",
        "where in the query image is the {p}",
        "detect the {p} in the query image using the support prompt",
    ),
    KIND_TEXTUAL: (
        "locate the {p} in the image",
        "where is the {p} in the image",
        "find the position of the {p}",
        "point out the {p} in the image",
    ),
}


def word_inventory() -> set[str]:
    """Every word any instruction, name, or description can contain."""
    words: set[str] = set()
    for bank in TEMPLATES.values():
        for tpl in bank:
            words.update(w for w in tpl.replace("{p}", " ").split() if w)
    for schema in SCHEMAS.values():
        for name, desc in schema:
            words.update(name.split())
            words.update(desc.split())
    return words


def render_answer(name: str, target_xy: np.ndarray | None, strategy: str, itd: bool) -> str:
    """Target string for a detection or semantic-understanding sample."""
    if target_xy is None:
        return name
    pos = KPT if strategy == STRATEGY_SPECIAL else format_position_text(target_xy)
    if itd:
        return f"{name} {SEP} {pos}"
    return pos


def make_sample(kind: str, query: InstanceRecord, support: InstanceRecord | None,
                keypoint_index: int, rng: Rng, cfg: ModelConfig,
                pad: float = 0.125, template_idx: int | None = None,
                use_description: bool | None = None) -> TaskSample:
    """Render one training/eval example.

    `rng` picks the paraphrase and the name-vs-description variant unless they
    are pinned explicitly.
    """
    schema = SCHEMAS[query.category]
    if not 0 <= keypoint_index < len(schema):
        raise ContractError(f"keypoint index {keypoint_index} outside schema of "
                            f"{query.category} ({len(schema)} keypoints)")
    name, description = schema[keypoint_index]
    if not query.keypoint(name).labeled:
        raise ContractError(f"keypoint {name!r} is absent from the query record")

    if kind == KIND_KSU:
        support = query
    elif kind == KIND_VISUAL:
        if support is None:
            raise ContractError("visual prompting requires a support record")
        if support.category != query.category:
            raise ContractError(
                f"support category {support.category!r} does not share the "
                f"keypoint schema of query category {query.category!r}")
        if not support.keypoint(name).labeled:
            raise ContractError(f"keypoint {name!r} is absent from the support record")
    elif kind == KIND_TEXTUAL:
        support = None
    else:
        raise ContractError(f"unknown task kind {kind!r}")

    query_patch, qtf = crop_instance(query, pad=pad, out_size=cfg.input_size)

    bank_key = kind
    slot = None
    if kind == KIND_TEXTUAL or (kind == KIND_VISUAL and cfg.visual_textual):
        if kind == KIND_VISUAL:
            bank_key = "visual_textual"
        use_desc = (rng.random() < 0.5) if use_description is None else use_description
        slot = description if use_desc else name
    bank = TEMPLATES[bank_key]
    t_idx = template_idx if template_idx is not None else rng.integers(0, len(bank))
    instruction = bank[t_idx].format(p=slot) if slot is not None else bank[t_idx]

    support_pack = None
    if support is not None:
        support_patch, stf = crop_instance(support, pad=pad, out_size=cfg.input_size)
        prompt_xy = keypoint_crop_position(support, name, stf)
        support_pack = (support_patch, KeypointPrompt(float(prompt_xy[0]), float(prompt_xy[1])))

    target_xy = None
    if kind != KIND_KSU:
        target_xy = keypoint_crop_position(query, name, qtf)

    return TaskSample(
        kind=kind,
        query=query_patch,
        support=support_pack,
        instruction=instruction,
        target_answer=render_answer(name, target_xy, cfg.strategy, cfg.itd),
        target_position=target_xy,
        keypoint_name=name,
        family=query.category,
        sample_id=f"{query.record_id}:{name}:{kind}",
        is_mirror=is_mirror_keypoint(query.category, name),
        query_transform=qtf,
    )
