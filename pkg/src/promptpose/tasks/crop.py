"""Single-object crop pipeline: square window around the padded bbox, resized
to the model input size, with the exact affine transform kept so positions map
both ways (scene pixels <-> crop-normalized coordinates)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image

from ..encoders import ImagePatch
from ..errors import DomainError
from .records import InstanceRecord


@dataclass
class CropTransform:
    ox: int          # crop window origin in scene pixels
    oy: int
    side: int        # crop window side in scene pixels
    out_size: int    # model input side in pixels

    def scene_to_crop(self, pts: np.ndarray) -> np.ndarray:
        """Scene pixels -> crop-normalized [0,1] coordinates."""
        pts = np.asarray(pts, dtype=np.float64)
        return (pts - np.array([self.ox, self.oy])) / self.side

    def crop_to_scene(self, pts: np.ndarray) -> np.ndarray:
        """Crop-normalized [0,1] -> scene pixels."""
        pts = np.asarray(pts, dtype=np.float64)
        return pts * self.side + np.array([self.ox, self.oy])


def crop_instance(rec: InstanceRecord, pad: float = 0.125,
                  out_size: int = 64) -> tuple[ImagePatch, CropTransform]:
    """Crop a square window around the padded bbox and resize bilinearly.

    The window uses integer geometry so the transform is exact; out-of-scene
    pixels are zero-filled.
    """
    x, y, w, h = rec.bbox
    if w <= 0 or h <= 0:
        raise DomainError(f"degenerate bbox {rec.bbox}")
    side = int(np.ceil(max(w, h) * (1.0 + 2.0 * pad)))
    side = max(side, 2)
    cx, cy = x + w / 2.0, y + h / 2.0
    ox = int(round(cx - side / 2.0))
    oy = int(round(cy - side / 2.0))

    hh, ww = rec.image.shape[:2]
    canvas = np.zeros((side, side, 3), dtype=np.uint8)
    sx0, sy0 = max(0, ox), max(0, oy)
    sx1, sy1 = min(ww, ox + side), min(hh, oy + side)
    if sx1 > sx0 and sy1 > sy0:
        canvas[sy0 - oy:sy1 - oy, sx0 - ox:sx1 - ox] = rec.image[sy0:sy1, sx0:sx1]

    resized = Image.fromarray(canvas).resize((out_size, out_size), Image.BILINEAR)
    pixels = np.asarray(resized, dtype=np.float32) / 255.0
    return (ImagePatch(pixels=pixels),
            CropTransform(ox=ox, oy=oy, side=side, out_size=out_size))


def keypoint_crop_position(rec: InstanceRecord, name: str, tf: CropTransform) -> np.ndarray:
    """Ground-truth keypoint in crop-normalized coordinates (clipped to [0,1])."""
    return np.clip(tf.scene_to_crop(rec.keypoint_px(name)), 0.0, 1.0)
