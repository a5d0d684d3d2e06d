"""Procedural scene renderer with exact keypoint ground truth.

Four object families (cartoon face, stick-figure body, side-view quadruped,
front-view vehicle) are drawn analytically onto a cluttered background, so
every keypoint position is known by construction. Each family carries one
mirror-symmetric keypoint pair whose separation is sampled bimodally: a
substantial fraction of scenes place the pair close together, which is the
ambiguity the prompt extractor and the identify-then-detect protocol are
evaluated against.

`left`/`right` names follow the viewer: the member of a pair with the smaller
x coordinate is the left one. Rendering a horizontally mirrored pose therefore
swaps the labels, which the self-check tests assert.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError
from ..numerics import Rng, derive_seed
from .records import InstanceRecord, Keypoint, VIS_OCCLUDED, VIS_VISIBLE

FAMILIES = ("biped_face", "biped_body", "quadruped", "vehicle")

SCHEMAS = {
    "biped_face": [
        ("left eye", "the eye on the left side of the face"),
        ("right eye", "the eye on the right side of the face"),
        ("nose", "the nose at the center of the face"),
        ("mouth", "the mouth below the nose"),
    ],
    "biped_body": [
        ("head", "the round head on top of the body"),
        ("left hand", "the hand at the end of the left arm"),
        ("right hand", "the hand at the end of the right arm"),
        ("left foot", "the foot at the end of the left leg"),
        ("right foot", "the foot at the end of the right leg"),
    ],
    "quadruped": [
        ("nose", "the nose at the front of the head"),
        ("left ear", "the ear on the left side of the head"),
        ("right ear", "the ear on the right side of the head"),
        ("tail", "the tail at the rear of the body"),
    ],
    "vehicle": [
        ("left light", "the light on the left side of the vehicle"),
        ("right light", "the light on the right side of the vehicle"),
        ("roof", "the roof on top of the vehicle"),
        ("bumper", "the bumper at the bottom of the vehicle"),
    ],
}

MIRROR_PAIRS = {
    "biped_face": [("left eye", "right eye")],
    "biped_body": [("left hand", "right hand"), ("left foot", "right foot")],
    "quadruped": [("left ear", "right ear")],
    "vehicle": [("left light", "right light")],
}

SKELETONS = {
    "biped_face": [(0, 2), (1, 2), (2, 3)],
    "biped_body": [(0, 1), (0, 2), (0, 3), (0, 4)],
    "quadruped": [(0, 1), (0, 2), (0, 3)],
    "vehicle": [(0, 2), (1, 2), (2, 3)],
}


@dataclass
class SyntheticSceneSpec:
    family: str
    seed: int
    size: int = 96
    occlusion: float = 0.08
    clutter: float = 0.5
    pose: dict | None = None    # explicit pose parameters; sampled from seed if None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown family {self.family!r}")
        if self.size < 16:
            raise ConfigError(f"render size {self.size} below the 16px minimum")


# -- rasterization ------------------------------------------------------------

def _grid(size: int):
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) + 0.5
    return xx, yy


def _paint(canvas, mask, color):
    canvas[mask] = color


def _ellipse_mask(xx, yy, cx, cy, rx, ry, angle=0.0):
    ca, sa = math.cos(angle), math.sin(angle)
    dx, dy = xx - cx, yy - cy
    u = ca * dx + sa * dy
    v = -sa * dx + ca * dy
    return (u / rx) ** 2 + (v / ry) ** 2 <= 1.0


def _rect_mask(xx, yy, x0, y0, x1, y1):
    return (xx >= x0) & (xx <= x1) & (yy >= y0) & (yy <= y1)


def _segment_mask(xx, yy, x0, y0, x1, y1, width):
    px, py = x1 - x0, y1 - y0
    norm = px * px + py * py
    if norm == 0:
        return (xx - x0) ** 2 + (yy - y0) ** 2 <= (width / 2) ** 2
    t = np.clip(((xx - x0) * px + (yy - y0) * py) / norm, 0.0, 1.0)
    dx = xx - (x0 + t * px)
    dy = yy - (y0 + t * py)
    return dx * dx + dy * dy <= (width / 2) ** 2


def _draw_part(canvas, xx, yy, part):
    kind = part["kind"]
    if kind == "ellipse":
        m = _ellipse_mask(xx, yy, part["cx"], part["cy"], part["rx"], part["ry"],
                          part.get("angle", 0.0))
    elif kind == "rect":
        m = _rect_mask(xx, yy, part["x0"], part["y0"], part["x1"], part["y1"])
    elif kind == "line":
        m = _segment_mask(xx, yy, part["x0"], part["y0"], part["x1"], part["y1"],
                          part["width"])
    else:
        raise ConfigError(f"unknown part kind {kind!r}")
    _paint(canvas, m, part["color"])


def _part_extent(part):
    if part["kind"] == "ellipse":
        r = max(part["rx"], part["ry"])
        return (part["cx"] - r, part["cy"] - r, part["cx"] + r, part["cy"] + r)
    if part["kind"] == "rect":
        return (part["x0"], part["y0"], part["x1"], part["y1"])
    w = part["width"] / 2
    return (min(part["x0"], part["x1"]) - w, min(part["y0"], part["y1"]) - w,
            max(part["x0"], part["x1"]) + w, max(part["y0"], part["y1"]) + w)


def _mirror_part(part, size):
    p = dict(part)
    if p["kind"] == "ellipse":
        p["cx"] = size - p["cx"]
        p["angle"] = -p.get("angle", 0.0)
    elif p["kind"] == "rect":
        p["x0"], p["x1"] = size - part["x1"], size - part["x0"]
    else:
        p["x0"], p["x1"] = size - part["x0"], size - part["x1"]
    return p


def _rot(angle):
    ca, sa = math.cos(angle), math.sin(angle)
    return np.array([[ca, -sa], [sa, ca]])


def _color(rng, lo, hi):
    return tuple(float(v) for v in rng.uniform(lo, hi, 3))


def _bimodal_sep(rng, size, near_frac=0.42, near=(0.055, 0.15), far=(0.18, 0.34)):
    band = near if rng.random() < near_frac else far
    return rng.uniform(band[0], band[1]) * size


# -- family layouts -----------------------------------------------------------
# Each returns (parts, pairs, singles): `pairs` maps a base name to its two
# positions (handedness assigned later), `singles` maps full names to positions.

def _layout_biped_face(rng: Rng, size: int) -> tuple:
    k = size / 96.0
    c = np.array([size / 2 + rng.uniform(-7, 7), size / 2 + rng.uniform(-7, 7)])
    rx = rng.uniform(15, 24) * k
    ry = rx * rng.uniform(0.9, 1.25)
    tilt = rng.uniform(-0.3, 0.3)
    sep = min(_bimodal_sep(rng, size), 1.5 * rx)
    eye_dy = -rng.uniform(0.2, 0.42) * ry
    eye_r = rng.uniform(2.0, 3.0) * k
    nose_dy = rng.uniform(0.02, 0.16) * ry
    mouth_dy = rng.uniform(0.42, 0.62) * ry
    mouth_w = rng.uniform(0.35, 0.6) * rx
    face_col = _color(rng, 0.35, 0.7)
    eye_col = _color(rng, 0.02, 0.15)
    mouth_col = (rng.uniform(0.4, 0.7), rng.uniform(0.05, 0.2), rng.uniform(0.05, 0.25))
    rot = _rot(tilt)
    eye_a = c + rot @ np.array([-sep / 2, eye_dy])
    eye_b = c + rot @ np.array([sep / 2, eye_dy])
    nose = c + rot @ np.array([0.0, nose_dy])
    mouth = c + rot @ np.array([0.0, mouth_dy])
    parts = [
        {"kind": "ellipse", "cx": c[0], "cy": c[1], "rx": rx, "ry": ry,
         "angle": tilt, "color": face_col},
        {"kind": "ellipse", "cx": eye_a[0], "cy": eye_a[1], "rx": eye_r, "ry": eye_r,
         "color": eye_col},
        {"kind": "ellipse", "cx": eye_b[0], "cy": eye_b[1], "rx": eye_r, "ry": eye_r,
         "color": eye_col},
        {"kind": "ellipse", "cx": nose[0], "cy": nose[1], "rx": 1.9 * k, "ry": 1.9 * k,
         "color": tuple(v * 0.55 for v in face_col)},
        {"kind": "ellipse", "cx": mouth[0], "cy": mouth[1], "rx": mouth_w, "ry": 1.9 * k,
         "angle": tilt, "color": mouth_col},
    ]
    return parts, {"eye": (eye_a, eye_b)}, {"nose": nose, "mouth": mouth}


def _layout_biped_body(rng: Rng, size: int) -> tuple:
    k = size / 96.0
    c = np.array([size / 2 + rng.uniform(-6, 6), size / 2 + rng.uniform(-5, 5)])
    lt = rng.uniform(26, 40) * k
    lean = rng.uniform(-0.12, 0.12)
    rot = _rot(lean)
    top = c + rot @ np.array([0.0, -lt / 2])
    hip = c + rot @ np.array([0.0, lt / 2])
    head_r = rng.uniform(4.5, 7.5) * k
    head = top + rot @ np.array([0.0, -head_r * 1.15])
    close = rng.random() < 0.42
    sw = (rng.uniform(3, 5) if close else rng.uniform(4, 7)) * k
    la = rng.uniform(12, 19) * k
    if close:
        phi_a, phi_b = rng.uniform(0.02, 0.10), rng.uniform(0.02, 0.10)
    else:
        phi_a, phi_b = rng.uniform(0.45, 1.65), rng.uniform(0.45, 1.65)
    sh_a = top + rot @ np.array([-sw, 0.12 * lt])
    sh_b = top + rot @ np.array([sw, 0.12 * lt])
    hand_a = sh_a + rot @ np.array([-la * math.sin(phi_a), la * math.cos(phi_a)])
    hand_b = sh_b + rot @ np.array([la * math.sin(phi_b), la * math.cos(phi_b)])
    hw = rng.uniform(2.5, 4.5) * k
    lg = rng.uniform(12, 19) * k
    psi_a, psi_b = rng.uniform(0.07, 0.55), rng.uniform(0.07, 0.55)
    hip_a = hip + rot @ np.array([-hw, 0.0])
    hip_b = hip + rot @ np.array([hw, 0.0])
    foot_a = hip_a + rot @ np.array([-lg * math.sin(psi_a), lg * math.cos(psi_a)])
    foot_b = hip_b + rot @ np.array([lg * math.sin(psi_b), lg * math.cos(psi_b)])
    body_col = _color(rng, 0.15, 0.5)
    tip_col = _color(rng, 0.02, 0.15)
    wid = rng.uniform(2.4, 3.4) * k
    parts = [
        {"kind": "line", "x0": top[0], "y0": top[1], "x1": hip[0], "y1": hip[1],
         "width": wid * 1.4, "color": body_col},
        {"kind": "ellipse", "cx": head[0], "cy": head[1], "rx": head_r, "ry": head_r,
         "color": body_col},
        {"kind": "line", "x0": sh_a[0], "y0": sh_a[1], "x1": hand_a[0], "y1": hand_a[1],
         "width": wid, "color": body_col},
        {"kind": "line", "x0": sh_b[0], "y0": sh_b[1], "x1": hand_b[0], "y1": hand_b[1],
         "width": wid, "color": body_col},
        {"kind": "line", "x0": hip_a[0], "y0": hip_a[1], "x1": foot_a[0], "y1": foot_a[1],
         "width": wid, "color": body_col},
        {"kind": "line", "x0": hip_b[0], "y0": hip_b[1], "x1": foot_b[0], "y1": foot_b[1],
         "width": wid, "color": body_col},
        {"kind": "ellipse", "cx": hand_a[0], "cy": hand_a[1], "rx": 1.8 * k, "ry": 1.8 * k,
         "color": tip_col},
        {"kind": "ellipse", "cx": hand_b[0], "cy": hand_b[1], "rx": 1.8 * k, "ry": 1.8 * k,
         "color": tip_col},
        {"kind": "ellipse", "cx": foot_a[0], "cy": foot_a[1], "rx": 1.8 * k, "ry": 1.8 * k,
         "color": tip_col},
        {"kind": "ellipse", "cx": foot_b[0], "cy": foot_b[1], "rx": 1.8 * k, "ry": 1.8 * k,
         "color": tip_col},
    ]
    return parts, {"hand": (hand_a, hand_b), "foot": (foot_a, foot_b)}, {"head": head}


def _layout_quadruped(rng: Rng, size: int) -> tuple:
    k = size / 96.0
    c = np.array([size / 2 + rng.uniform(-5, 5), size / 2 + rng.uniform(-5, 5)])
    bl = rng.uniform(15, 22) * k
    bh = bl * rng.uniform(0.42, 0.6)
    f = 1.0 if rng.random() < 0.5 else -1.0
    rh = rng.uniform(5, 8) * k
    head = np.array([c[0] + f * (bl + 0.25 * rh), c[1] - bh * 0.75])
    nose = head + np.array([f * rh * 0.92, rh * 0.15])
    ear_sep = rng.uniform(3.5 * k, min(11 * k, 1.7 * rh))
    ear_a = head + np.array([-ear_sep / 2, -rh * 0.92])
    ear_b = head + np.array([ear_sep / 2, -rh * 0.92])
    tail = np.array([c[0] - f * bl * 1.02, c[1] - bh * 0.45])
    tail_tip = tail + np.array([-f * rng.uniform(4, 7) * k, -rng.uniform(5, 9) * k])
    body_col = _color(rng, 0.2, 0.55)
    dark = tuple(v * 0.5 for v in body_col)
    parts = [
        {"kind": "ellipse", "cx": c[0], "cy": c[1], "rx": bl, "ry": bh, "color": body_col},
        {"kind": "ellipse", "cx": head[0], "cy": head[1], "rx": rh, "ry": rh, "color": body_col},
        {"kind": "ellipse", "cx": ear_a[0], "cy": ear_a[1], "rx": 1.8 * k, "ry": 2.4 * k,
         "color": dark},
        {"kind": "ellipse", "cx": ear_b[0], "cy": ear_b[1], "rx": 1.8 * k, "ry": 2.4 * k,
         "color": dark},
        {"kind": "ellipse", "cx": nose[0], "cy": nose[1], "rx": 1.4 * k, "ry": 1.4 * k,
         "color": (0.05, 0.05, 0.05)},
        {"kind": "line", "x0": tail[0], "y0": tail[1], "x1": tail_tip[0], "y1": tail_tip[1],
         "width": 2.2 * k, "color": dark},
    ]
    for off in (-0.55, -0.2, 0.2, 0.55):
        x = c[0] + off * 2 * bl * 0.5
        parts.append({"kind": "line", "x0": x, "y0": c[1] + bh * 0.6, "x1": x,
                      "y1": c[1] + bh * 0.6 + rng.uniform(8, 13) * k,
                      "width": 2.2 * k, "color": body_col})
    return parts, {"ear": (ear_a, ear_b)}, {"nose": nose, "tail": tail}


def _layout_vehicle(rng: Rng, size: int) -> tuple:
    k = size / 96.0
    c = np.array([size / 2 + rng.uniform(-6, 6), size / 2 + rng.uniform(-5, 5) + 3 * k])
    w2 = rng.uniform(15, 24) * k
    h2 = rng.uniform(9, 14) * k
    top, bottom = c[1] - h2, c[1] + h2
    cab_w = w2 * rng.uniform(0.5, 0.72)
    cab_h = rng.uniform(6, 10) * k
    sep = min(_bimodal_sep(rng, size, far=(0.2, 0.4)), 1.7 * w2)
    light_r = rng.uniform(2.0, 3.0) * k
    light_y = c[1] + h2 * 0.45
    light_a = np.array([c[0] - sep / 2, light_y])
    light_b = np.array([c[0] + sep / 2, light_y])
    roof = np.array([c[0], top - cab_h])
    bumper = np.array([c[0], bottom - 1.0 * k])
    body_col = _color(rng, 0.2, 0.6)
    cab_col = tuple(min(1.0, v * 1.3) for v in body_col)
    light_col = (rng.uniform(0.8, 0.95), rng.uniform(0.7, 0.88), rng.uniform(0.05, 0.25))
    parts = [
        {"kind": "rect", "x0": c[0] - cab_w, "y0": top - cab_h, "x1": c[0] + cab_w,
         "y1": top, "color": cab_col},
        {"kind": "rect", "x0": c[0] - w2, "y0": top, "x1": c[0] + w2, "y1": bottom,
         "color": body_col},
        {"kind": "rect", "x0": c[0] - w2, "y0": bottom - 2.6 * k, "x1": c[0] + w2,
         "y1": bottom, "color": tuple(v * 0.5 for v in body_col)},
        {"kind": "ellipse", "cx": c[0] - w2 * 0.72, "cy": bottom + 1.5 * k, "rx": 3.4 * k,
         "ry": 3.4 * k, "color": (0.08, 0.08, 0.08)},
        {"kind": "ellipse", "cx": c[0] + w2 * 0.72, "cy": bottom + 1.5 * k, "rx": 3.4 * k,
         "ry": 3.4 * k, "color": (0.08, 0.08, 0.08)},
        {"kind": "ellipse", "cx": light_a[0], "cy": light_a[1], "rx": light_r, "ry": light_r,
         "color": light_col},
        {"kind": "ellipse", "cx": light_b[0], "cy": light_b[1], "rx": light_r, "ry": light_r,
         "color": light_col},
    ]
    return parts, {"light": (light_a, light_b)}, {"roof": roof, "bumper": bumper}


_LAYOUTS = {
    "biped_face": _layout_biped_face,
    "biped_body": _layout_biped_body,
    "quadruped": _layout_quadruped,
    "vehicle": _layout_vehicle,
}


def sample_pose(family: str, rng: Rng, size: int) -> dict:
    """Draw pose parameters; the layout itself is resampled from them later."""
    parts, pairs, singles = _LAYOUTS[family](rng, size)
    return {"parts": parts, "pairs": pairs, "singles": singles, "mirror": False}


def mirrored_pose(pose: dict) -> dict:
    return {**pose, "mirror": not pose.get("mirror", False)}


def render_scene(spec: SyntheticSceneSpec) -> InstanceRecord:
    """Rasterize one scene; deterministic given (family, seed, pose)."""
    size = spec.size
    rng = Rng(derive_seed(spec.seed, FAMILIES.index(spec.family)))
    pose = spec.pose if spec.pose is not None else sample_pose(spec.family, rng, size)

    parts = pose["parts"]
    pairs = pose["pairs"]
    singles = pose["singles"]
    if pose.get("mirror", False):
        parts = [_mirror_part(p, size) for p in parts]
        pairs = {k: (np.array([size - a[0], a[1]]), np.array([size - b[0], b[1]]))
                 for k, (a, b) in pairs.items()}
        singles = {k: np.array([size - v[0], v[1]]) for k, v in singles.items()}

    # viewer-relative handedness: smaller x is "left"
    named: dict[str, np.ndarray] = dict(singles)
    for base, (a, b) in pairs.items():
        left, right = (a, b) if a[0] <= b[0] else (b, a)
        named[f"left {base}"] = left
        named[f"right {base}"] = right

    xx, yy = _grid(size)
    canvas = np.empty((size, size, 3), dtype=np.float64)
    canvas[:] = rng.uniform(0.78, 0.95, 3)
    for _ in range(int(round(spec.clutter * 8))):
        cx, cy = rng.uniform(0, size), rng.uniform(0, size)
        w, h = rng.uniform(4, 16), rng.uniform(4, 16)
        _paint(canvas, _rect_mask(xx, yy, cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2),
               _color(rng, 0.55, 0.78))
    for part in parts:
        _draw_part(canvas, xx, yy, part)

    # occlusion: independent per keypoint; positions are retained
    schema = SCHEMAS[spec.family]
    visibility = {name: VIS_VISIBLE for name, _ in schema}
    for name, _ in schema:
        if rng.random() < spec.occlusion:
            pos = named[name]
            r = rng.uniform(3, 5) * size / 96.0
            _paint(canvas, _ellipse_mask(xx, yy, pos[0], pos[1], r, r),
                   _color(rng, 0.6, 0.8))
            visibility[name] = VIS_OCCLUDED

    canvas += rng.normal((size, size, 3), std=0.012, dtype=np.float64)
    image = np.round(np.clip(canvas, 0.0, 1.0) * 255.0).astype(np.uint8)

    extents = [_part_extent(p) for p in parts]
    xs0 = min(e[0] for e in extents)
    ys0 = min(e[1] for e in extents)
    xs1 = max(e[2] for e in extents)
    ys1 = max(e[3] for e in extents)
    for pos in named.values():
        xs0, ys0 = min(xs0, pos[0]), min(ys0, pos[1])
        xs1, ys1 = max(xs1, pos[0]), max(ys1, pos[1])
    margin = 2.0 * size / 96.0
    x0 = max(0.0, xs0 - margin)
    y0 = max(0.0, ys0 - margin)
    x1 = min(float(size), xs1 + margin)
    y1 = min(float(size), ys1 + margin)

    keypoints = [Keypoint(name=name, description=desc,
                          position=np.clip(named[name] / size, 0.0, 1.0),
                          visibility=visibility[name])
                 for name, desc in schema]
    return InstanceRecord(image=image, bbox=(x0, y0, x1 - x0, y1 - y0),
                          category=spec.family, keypoints=keypoints,
                          skeleton=list(SKELETONS[spec.family]),
                          record_id=f"{spec.family}-{spec.seed}")


def mirror_pair_separation(rec: InstanceRecord) -> float:
    """Scene-normalized distance of the family's primary mirror pair."""
    left, right = MIRROR_PAIRS[rec.category][0]
    a = rec.keypoint(left).position
    b = rec.keypoint(right).position
    return float(np.linalg.norm(a - b))


def is_mirror_keypoint(family: str, name: str) -> bool:
    return any(name in pair for pair in MIRROR_PAIRS[family])
