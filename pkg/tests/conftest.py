import numpy as np
import pytest

from promptpose.config import RunConfig
from promptpose.numerics import Rng
from promptpose.tasks.dataset_io import generate_splits
from promptpose.tasks.synth import SyntheticSceneSpec, render_scene


def tiny_config(**model_overrides) -> RunConfig:
    """Small-but-complete config for fast unit tests."""
    cfg = RunConfig()
    cfg.model.input_size = 32
    cfg.model.patch = 8
    cfg.model.d = 32
    cfg.model.enc_blocks = 1
    cfg.model.enc_heads = 2
    cfg.model.d_llm = 48
    cfg.model.lm_blocks = 2
    cfg.model.lm_heads = 2
    cfg.data.count = 30
    cfg.data.scene_size = 64
    cfg.train.batch = 4
    cfg.train.steps = 2
    cfg.eval.batch = 16
    for key, value in model_overrides.items():
        setattr(cfg.model, key, value)
    return cfg.validate()


@pytest.fixture(scope="session")
def tiny_cfg() -> RunConfig:
    return tiny_config()


@pytest.fixture(scope="session")
def tiny_splits(tiny_cfg):
    return generate_splits(tiny_cfg.data)


@pytest.fixture()
def rng() -> Rng:
    return Rng(1234)


@pytest.fixture(scope="session")
def one_record():
    return render_scene(SyntheticSceneSpec(family="biped_face", seed=99, size=64))
