"""Run configuration: one dataclass per concern, serializable to an INI-style
text file (``[section]`` + ``key = value``). Command-line flags override file
values; every field has a default that trains and evaluates out of the box.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
from dataclasses import dataclass, field

from .errors import ConfigError

STRATEGY_SPECIAL = "special-token"
STRATEGY_TEXT = "numerical-text"
EXTRACTOR_XATTN = "xattn"
EXTRACTOR_AVGPOOL = "avgpool"

DEFAULT_FAMILIES = ("biped_face", "biped_body", "quadruped", "vehicle")


@dataclass
class ModelConfig:
    input_size: int = 64          # square model input, pixels
    patch: int = 8                # ViT patch size
    d: int = 64                   # visual feature width
    enc_blocks: int = 2
    enc_heads: int = 4
    d_llm: int = 128              # language model width
    lm_blocks: int = 4
    lm_heads: int = 4
    n_prompt_tokens: int = 1
    strategy: str = STRATEGY_TEXT
    itd: bool = True              # emit the identity clause before the position
    extractor: str = EXTRACTOR_XATTN
    visual_textual: bool = False  # name the keypoint inside visual-prompt instructions
    lora: bool = False
    lora_rank: int = 4
    lora_alpha: float = 8.0
    encoder_trainable: bool = True
    precision: str = "f32"        # f32 | f64
    max_gen_tokens: int = 64

    def validate(self) -> None:
        if self.input_size % self.patch != 0:
            raise ConfigError(
                f"input size {self.input_size} not divisible by patch {self.patch}")
        if self.strategy not in (STRATEGY_SPECIAL, STRATEGY_TEXT):
            raise ConfigError(f"unknown strategy {self.strategy!r}")
        if self.extractor not in (EXTRACTOR_XATTN, EXTRACTOR_AVGPOOL):
            raise ConfigError(f"unknown extractor {self.extractor!r}")
        if self.precision not in ("f32", "f64"):
            raise ConfigError(f"precision must be f32 or f64, got {self.precision!r}")
        if self.lora and self.lora_rank <= 0:
            raise ConfigError(f"LoRA rank must be positive, got {self.lora_rank}")

    @property
    def grid(self) -> int:
        return self.input_size // self.patch

    @property
    def dtype(self):
        import numpy as np
        return np.float32 if self.precision == "f32" else np.float64


@dataclass
class TrainConfig:
    lr: float = 2e-4
    weight_decay: float = 0.0
    steps: int = 9000
    batch: int = 16
    clip: float = 1.0             # global grad-norm cap; 0 disables
    warmup: int = 50
    seed: int = 0
    ckpt_every: int = 0           # 0 = final checkpoint only
    lambda_pos: float = 2.0       # weight on the L1 position term (special-token)
    l1_reduction: str = "sum"     # sum | mean over the 2 coordinates
    tasks: str = "ksu,visual,textual"
    sampling: str = "uniform"     # uniform | proportional (by family count)

    def task_list(self) -> list[str]:
        out = [t.strip() for t in self.tasks.split(",") if t.strip()]
        for t in out:
            if t not in ("ksu", "visual", "textual"):
                raise ConfigError(f"unknown task kind {t!r}")
        return out


@dataclass
class DataConfig:
    families: str = ",".join(DEFAULT_FAMILIES)
    count: int = 5000
    scene_size: int = 96
    occlusion: float = 0.08
    clutter: float = 0.5
    seed: int = 7
    holdout: str = ""             # family excluded from train/val, kept in test
    pad: float = 0.125            # crop padding fraction of the longest bbox side

    def family_list(self) -> list[str]:
        out = [f.strip() for f in self.families.split(",") if f.strip()]
        for f in out:
            if f not in DEFAULT_FAMILIES:
                raise ConfigError(f"unknown family {f!r}")
        return out


@dataclass
class EvalConfig:
    pck_alphas: str = "0.05,0.1,0.2"
    oks_k: float = 0.07
    batch: int = 64
    overlays: int = 0
    mirror_only: bool = False
    pck_normalizer: str = "max_side"   # max_side | diagonal

    def alpha_list(self) -> list[float]:
        return [float(a) for a in self.pck_alphas.split(",") if a.strip()]


@dataclass
class PathConfig:
    data_dir: str = "data"
    run_dir: str = "run"


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    paths: PathConfig = field(default_factory=PathConfig)

    def validate(self) -> "RunConfig":
        self.model.validate()
        self.train.task_list()
        self.data.family_list()
        self.eval.alpha_list()
        return self


_SECTIONS = ("model", "train", "data", "eval", "paths")


def _coerce(value: str, pytype):
    if pytype is bool:
        low = value.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"expected a boolean, got {value!r}")
    return pytype(value)


def to_ini(cfg: RunConfig, include_paths: bool = True) -> str:
    """Render the config as INI text (stable key order)."""
    parser = configparser.ConfigParser()
    for section in _SECTIONS:
        if section == "paths" and not include_paths:
            continue
        sub = getattr(cfg, section)
        parser[section] = {f.name: str(getattr(sub, f.name)) for f in dataclasses.fields(sub)}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def from_ini(text: str, base: RunConfig | None = None) -> RunConfig:
    """Parse INI text over `base` (or defaults); unknown keys are errors."""
    cfg = base if base is not None else RunConfig()
    parser = configparser.ConfigParser()
    parser.read_string(text)
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        sub = getattr(cfg, section)
        known = {f.name: f for f in dataclasses.fields(sub)}
        for key, value in parser[section].items():
            if key not in known:
                raise ConfigError(f"unknown config key {section}.{key}")
            pytype = type(getattr(sub, key))
            setattr(sub, key, _coerce(value, pytype))
    return cfg


def apply_overrides(cfg: RunConfig, pairs: list[tuple[str, str]]) -> RunConfig:
    """Apply (\"section.key\", \"value\") overrides; flags win over files."""
    for dotted, value in pairs:
        if "." not in dotted:
            raise ConfigError(f"override key must be section.key, got {dotted!r}")
        section, key = dotted.split(".", 1)
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config section {section!r}")
        sub = getattr(cfg, section)
        if not hasattr(sub, key):
            raise ConfigError(f"unknown config key {section}.{key}")
        setattr(sub, key, _coerce(value, type(getattr(sub, key))))
    return cfg


def config_field_help() -> list[tuple[str, str, str]]:
    """(section.key, default, type) rows for --help output."""
    rows = []
    cfg = RunConfig()
    for section in _SECTIONS:
        sub = getattr(cfg, section)
        for f in dataclasses.fields(sub):
            rows.append((f"{section}.{f.name}", str(getattr(sub, f.name)), type(getattr(sub, f.name)).__name__))
    return rows
