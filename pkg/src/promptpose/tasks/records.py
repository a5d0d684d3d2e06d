"""Dataset record types: keypoints, object instances, rendered task samples."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..encoders import ImagePatch, KeypointPrompt
from ..errors import ContractError, DomainError

VIS_VISIBLE = "visible"
VIS_OCCLUDED = "occluded"
VIS_ABSENT = "absent"

KIND_KSU = "ksu"
KIND_VISUAL = "visual"
KIND_TEXTUAL = "textual"


@dataclass
class Keypoint:
    name: str
    description: str
    position: np.ndarray | None   # (2,) normalized to the full scene, None iff absent
    visibility: str = VIS_VISIBLE

    def __post_init__(self):
        if self.visibility not in (VIS_VISIBLE, VIS_OCCLUDED, VIS_ABSENT):
            raise DomainError(f"unknown visibility {self.visibility!r}")
        if self.visibility == VIS_ABSENT:
            self.position = None
        else:
            pos = np.asarray(self.position, dtype=np.float64)
            if pos.shape != (2,) or pos.min() < 0.0 or pos.max() > 1.0:
                raise DomainError(f"keypoint {self.name!r} position {pos} outside [0,1]^2")
            self.position = pos

    @property
    def labeled(self) -> bool:
        return self.visibility != VIS_ABSENT


@dataclass
class InstanceRecord:
    """One object in one scene: pixels, box, named keypoints, optional skeleton."""

    image: np.ndarray             # (H, W, 3) uint8 full scene
    bbox: tuple                   # (x, y, w, h) in scene pixels
    category: str
    keypoints: list[Keypoint]
    skeleton: list[tuple[int, int]] = field(default_factory=list)
    record_id: str = ""

    def __post_init__(self):
        img = np.asarray(self.image)
        if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
            raise DomainError(f"scene image must be uint8 (H, W, 3), got {img.shape} {img.dtype}")
        self.image = img
        x, y, w, h = (float(v) for v in self.bbox)
        hh, ww = img.shape[:2]
        if w <= 0 or h <= 0:
            raise DomainError(f"degenerate bbox {self.bbox}")
        if x < 0 or y < 0 or x + w > ww + 1e-6 or y + h > hh + 1e-6:
            raise DomainError(f"bbox {self.bbox} outside scene {ww}x{hh}")
        self.bbox = (x, y, w, h)

    @property
    def scene_size(self) -> tuple[int, int]:
        return self.image.shape[1], self.image.shape[0]   # (W, H)

    def keypoint(self, name: str) -> Keypoint:
        for kp in self.keypoints:
            if kp.name == name:
                return kp
        raise ContractError(f"record has no keypoint named {name!r}")

    def keypoint_px(self, name: str) -> np.ndarray:
        kp = self.keypoint(name)
        if kp.position is None:
            raise ContractError(f"keypoint {name!r} is absent")
        w, h = self.scene_size
        return kp.position * np.array([w, h], dtype=np.float64)

    @property
    def area(self) -> float:
        return self.bbox[2] * self.bbox[3]


@dataclass
class TaskSample:
    """Fully rendered example for one task kind."""

    kind: str
    query: ImagePatch
    support: tuple[ImagePatch, KeypointPrompt] | None
    instruction: str
    target_answer: str
    target_position: np.ndarray | None     # (2,) normalized to the query crop
    keypoint_name: str = ""
    family: str = ""
    sample_id: str = ""
    is_mirror: bool = False                 # target belongs to a mirror pair
    query_transform: object = None          # CropTransform back to scene pixels

    def __post_init__(self):
        if self.kind not in (KIND_KSU, KIND_VISUAL, KIND_TEXTUAL):
            raise ContractError(f"unknown task kind {self.kind!r}")
        if self.kind in (KIND_KSU, KIND_VISUAL) and self.support is None:
            raise ContractError(f"{self.kind} samples require a support image and prompt")
        if self.kind == KIND_TEXTUAL and self.support is not None:
            raise ContractError("textual samples carry no support image")
        if self.kind == KIND_KSU and self.target_position is not None:
            raise ContractError("semantic-understanding samples have no position target")
