"""Language-model side: vocabulary, fusion transformer, decoding."""

from .decoding import (
    GenerationResult,
    GreedyDecoder,
    KeypointPosition,
    format_position_text,
    generate_itd,
    parse_position_text,
)
from .model import LanguageModel, PositionHead, build_fusion_mask, text_rotary
from .vocab import BOS, EOS, KPT, SEP, Vocabulary, build_vocabulary

__all__ = [
    "GenerationResult", "GreedyDecoder", "KeypointPosition",
    "format_position_text", "generate_itd", "parse_position_text",
    "LanguageModel", "PositionHead", "build_fusion_mask", "text_rotary",
    "BOS", "EOS", "KPT", "SEP", "Vocabulary", "build_vocabulary",
]
