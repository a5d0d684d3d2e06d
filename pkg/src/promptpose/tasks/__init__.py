"""Task definitions: synthetic scenes, records, crops, samples, dataset files."""

from .crop import CropTransform, crop_instance, keypoint_crop_position
from .dataset_io import generate_splits, load_splits, read_dataset, write_dataset
from .records import (
    InstanceRecord,
    Keypoint,
    KIND_KSU,
    KIND_TEXTUAL,
    KIND_VISUAL,
    TaskSample,
    VIS_ABSENT,
    VIS_OCCLUDED,
    VIS_VISIBLE,
)
from .samples import TEMPLATES, make_sample, render_answer, word_inventory
from .synth import (
    FAMILIES,
    MIRROR_PAIRS,
    SCHEMAS,
    SKELETONS,
    SyntheticSceneSpec,
    is_mirror_keypoint,
    mirror_pair_separation,
    mirrored_pose,
    render_scene,
    sample_pose,
)

__all__ = [
    "CropTransform", "crop_instance", "keypoint_crop_position",
    "generate_splits", "load_splits", "read_dataset", "write_dataset",
    "InstanceRecord", "Keypoint", "KIND_KSU", "KIND_TEXTUAL", "KIND_VISUAL",
    "TaskSample", "VIS_ABSENT", "VIS_OCCLUDED", "VIS_VISIBLE",
    "TEMPLATES", "make_sample", "render_answer", "word_inventory",
    "FAMILIES", "MIRROR_PAIRS", "SCHEMAS", "SKELETONS", "SyntheticSceneSpec",
    "is_mirror_keypoint", "mirror_pair_separation", "mirrored_pose",
    "render_scene", "sample_pose",
]
