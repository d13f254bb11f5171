"""Synthetic person renderer with part structure, occluders, and partial crops.

Images are vertically stacked colored body-part regions (head, torso, arms,
legs, feet) on a cluttered noisy background, with 17 ground-truth joint
positions laid out like the COCO keypoint set. Identities differ by per-part
colors and a torso stripe pattern; cameras apply a fixed gain/tint so that
cross-camera matching is non-trivial. Occluders are desaturated gray
rectangles, distinct from every identity appearance.

Coordinates are (row, col) in image pixels; joints carry a visibility in
[0, 1] that occlusion and cropping push to ~0.
"""

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError
from ..heatmaps import COCO_JOINTS, flip_heatmap_stack

OCCLUDED_VIS = 0.02  # residual response an estimator would emit for a hidden joint

_J = {name: i for i, name in enumerate(COCO_JOINTS)}

# joint index permutation under a horizontal flip (left/right swap)
FLIP_JOINT_ORDER = [
    _J[n.replace("left_", "@").replace("right_", "left_").replace("@", "right_")]
    for n in COCO_JOINTS
]


@dataclass
class IdentitySpec:
    """Appearance parameters of one synthetic identity."""

    ident: int
    part_colors: dict  # part name -> rgb array in [0,1]
    stripe_color: np.ndarray
    stripe_period: int
    stripe_phase: int
    seed: int


@dataclass
class CameraModel:
    """Fixed photometric transform of one camera."""

    gain: float
    tint: np.ndarray  # rgb offset


def _saturated_color(rng):
    # identity colors keep a channel spread >= 0.15 so gray occluders stay distinct
    while True:
        c = rng.uniform(0.10, 0.90, size=3)
        if c.max() - c.min() >= 0.15:
            return c


def make_identity_spec(ident, seed):
    rng = np.random.default_rng((seed, int(ident), 0x1D))
    parts = {name: _saturated_color(rng) for name in ("head", "torso", "arms", "legs", "feet")}
    return IdentitySpec(
        ident=int(ident),
        part_colors=parts,
        stripe_color=_saturated_color(rng),
        stripe_period=int(rng.integers(3, 7)),
        stripe_phase=int(rng.integers(0, 6)),
        seed=int(seed),
    )


def make_cameras(num_cameras, seed):
    rng = np.random.default_rng((seed, 0xCA3))
    cams = []
    for _ in range(num_cameras):
        cams.append(
            CameraModel(
                gain=float(rng.uniform(0.75, 1.15)),
                tint=rng.uniform(-0.12, 0.12, size=3),
            )
        )
    return cams


def _fill(img, r0, r1, c0, c1, color):
    h, w = img.shape[:2]
    r0, r1 = max(0, int(round(r0))), min(h, int(round(r1)))
    c0, c1 = max(0, int(round(c0))), min(w, int(round(c1)))
    if r0 < r1 and c0 < c1:
        img[r0:r1, c0:c1] = color
    return (r0, r1, c0, c1)


def render_sample(spec, camera, rng_seed, height=64, width=32, clutter=3, with_info=False):
    """Draw one person image; returns (image, joints) and optionally layout info.

    Deterministic in (spec, camera, rng_seed). Joints are (17, 3) rows of
    (row, col, visibility), all visible for a holistic render.
    """
    rng = np.random.default_rng((spec.seed, spec.ident, int(rng_seed), 0x5A))
    h, w = height, width

    img = np.empty((h, w, 3), dtype=np.float64)
    img[:] = rng.uniform(0.25, 0.75)
    for _ in range(clutter):
        ch = rng.uniform(0.10, 0.30) * h
        cw = rng.uniform(0.20, 0.60) * w
        r0 = rng.uniform(0, h - ch)
        c0 = rng.uniform(0, w - cw)
        _fill(img, r0, r0 + ch, c0, c0 + cw, rng.uniform(0.1, 0.9, size=3))

    # body geometry with per-sample jitter
    cx = w / 2 + rng.uniform(-0.08, 0.08) * w
    top = rng.uniform(0.01, 0.05) * h
    scale = rng.uniform(0.92, 1.02)
    sway = rng.uniform(-0.05, 0.05) * w

    def R(frac):
        return top + frac * scale * h

    head_r, shoulder_r, elbow_r, wrist_r = R(0.085), R(0.18), R(0.33), R(0.46)
    hip_r, knee_r, ankle_r = R(0.49), R(0.70), R(0.88)
    head_rad = 0.058 * h * scale
    torso_hw = 0.20 * w * scale
    arm_w = 0.09 * w
    leg_hw = 0.095 * w
    leg_off = 0.115 * w

    boxes = []
    colors = spec.part_colors
    # legs + feet
    for s in (-1, 1):
        lc = cx + s * leg_off
        boxes.append(_fill(img, hip_r, ankle_r, lc - leg_hw, lc + leg_hw, colors["legs"]))
        boxes.append(_fill(img, ankle_r, ankle_r + 0.045 * h, lc - leg_hw, lc + leg_hw + (0.03 * w if s > 0 else 0), colors["feet"]))
    # torso with stripes
    boxes.append(_fill(img, shoulder_r - 0.01 * h, hip_r + 0.01 * h, cx - torso_hw, cx + torso_hw, colors["torso"]))
    t0, t1 = int(round(shoulder_r - 0.01 * h)), int(round(hip_r + 0.01 * h))
    for r in range(max(t0, 0), min(t1, h)):
        if ((r - spec.stripe_phase) // spec.stripe_period) % 2 == 1:
            _fill(img, r, r + 1, cx - torso_hw, cx + torso_hw, spec.stripe_color)
    # arms (upper along torso sides, lower with sway)
    for s in (-1, 1):
        ac = cx + s * (torso_hw + arm_w / 2)
        boxes.append(_fill(img, shoulder_r, elbow_r, ac - arm_w / 2, ac + arm_w / 2, colors["arms"]))
        lc = ac + s * sway
        boxes.append(_fill(img, elbow_r, wrist_r + 0.02 * h, lc - arm_w / 2, lc + arm_w / 2, colors["arms"]))
    # head
    boxes.append(_fill(img, head_r - head_rad, head_r + head_rad, cx - head_rad, cx + head_rad, colors["head"]))

    img += rng.normal(0.0, 0.03, size=img.shape)
    np.clip(img, 0.0, 1.0, out=img)
    img = np.clip(camera.gain * img + camera.tint, 0.0, 1.0)

    joints = np.zeros((17, 3), dtype=np.float64)
    joints[:, 2] = 1.0

    def put(name, r, c):
        joints[_J[name], 0] = r
        joints[_J[name], 1] = c

    put("nose", head_r, cx)
    put("left_eye", head_r - 0.3 * head_rad, cx - 0.4 * head_rad)
    put("right_eye", head_r - 0.3 * head_rad, cx + 0.4 * head_rad)
    put("left_ear", head_r, cx - 0.9 * head_rad)
    put("right_ear", head_r, cx + 0.9 * head_rad)
    put("left_shoulder", shoulder_r, cx - torso_hw)
    put("right_shoulder", shoulder_r, cx + torso_hw)
    put("left_elbow", elbow_r, cx - (torso_hw + arm_w / 2))
    put("right_elbow", elbow_r, cx + torso_hw + arm_w / 2)
    put("left_wrist", wrist_r, cx - (torso_hw + arm_w / 2) - sway)
    put("right_wrist", wrist_r, cx + torso_hw + arm_w / 2 + sway)
    put("left_hip", hip_r, cx - leg_off)
    put("right_hip", hip_r, cx + leg_off)
    put("left_knee", knee_r, cx - leg_off)
    put("right_knee", knee_r, cx + leg_off)
    put("left_ankle", ankle_r, cx - leg_off)
    put("right_ankle", ankle_r, cx + leg_off)

    if with_info:
        r0 = min(b[0] for b in boxes)
        r1 = max(b[1] for b in boxes)
        c0 = min(b[2] for b in boxes)
        c1 = max(b[3] for b in boxes)
        return img.astype(np.float32), joints, {"bbox": (r0, r1, c0, c1)}
    return img.astype(np.float32), joints


def body_bbox(joints, height, width):
    """Body bounding box (r0, r1, c0, c1) estimated from visible joints."""
    vis = joints[:, 2] > 0.05
    pts = joints[vis] if vis.any() else joints
    r0 = max(0, int(pts[:, 0].min() - 0.075 * height))
    r1 = min(height, int(pts[:, 0].max() + 0.055 * height))
    c0 = max(0, int(pts[:, 1].min() - 0.03 * width))
    c1 = min(width, int(pts[:, 1].max() + 0.03 * width))
    return r0, r1, c0, c1


def occlude(image, joints, fraction_range, rng):
    """Overlay one gray-textured rectangle covering a fraction of the body box.

    Returns (image, joints) copies; joints under the rectangle get their
    visibility pushed to ~0. fraction_range = [lo, hi] with 0 <= lo <= hi <= 0.6.
    """
    lo, hi = fraction_range
    if not (0.0 <= lo <= hi <= 0.6):
        raise ConfigurationError(f"invalid occlusion fraction range [{lo}, {hi}]")
    image = image.copy()
    joints = joints.copy()
    if hi == 0.0:
        return image, joints

    h, w = image.shape[:2]
    r0, r1, c0, c1 = body_bbox(joints, h, w)
    box_h, box_w = r1 - r0, c1 - c0
    area = box_h * box_w
    frac = rng.uniform(lo, hi)
    aspect = rng.uniform(0.6, 1.8)
    occ_h = int(round(min(box_h, max(1.0, np.sqrt(frac * area * aspect)))))
    occ_w = int(round(frac * area / occ_h))
    if occ_w > box_w:
        occ_w = box_w
        occ_h = int(round(frac * area / occ_w))
    occ_r = r0 + int(rng.integers(0, box_h - occ_h + 1))
    occ_c = c0 + int(rng.integers(0, box_w - occ_w + 1))

    gray = rng.uniform(0.35, 0.65)
    patch = np.empty((occ_h, occ_w, 3), dtype=image.dtype)
    patch[:] = gray
    # coarse horizontal banding so the occluder has texture, still achromatic
    band = rng.integers(2, 5)
    for r in range(occ_h):
        if (r // band) % 2 == 1:
            patch[r] = np.clip(gray + 0.12, 0, 1)
    patch += rng.normal(0, 0.04, size=patch.shape).astype(image.dtype)
    image[occ_r : occ_r + occ_h, occ_c : occ_c + occ_w] = np.clip(patch, 0, 1)

    covered = (
        (joints[:, 0] >= occ_r)
        & (joints[:, 0] < occ_r + occ_h)
        & (joints[:, 1] >= occ_c)
        & (joints[:, 1] < occ_c + occ_w)
    )
    joints[covered, 2] = np.minimum(joints[covered, 2], OCCLUDED_VIS)
    return image, joints


def crop_rows(mode, height):
    """Number of top rows kept by a partial crop."""
    if mode == "half":
        return height // 2
    if mode == "third":
        return height // 3
    raise ConfigurationError(f"unknown crop mode {mode!r}")


def partial_crop(image, joints, mode):
    """Keep the top half/third rows and stretch back to the canonical height.

    Joints move with the stretch; joints below the crop line get visibility 0.
    """
    h, w = image.shape[:2]
    kept = crop_rows(mode, h)
    src = (np.arange(h) * kept) // h  # nearest-neighbor row mapping
    out = image[src].copy()

    joints = joints.copy()
    below = joints[:, 0] >= kept
    joints[below, 2] = 0.0
    joints[:, 0] = joints[:, 0] * (h / kept)
    return out, joints


def augment(image, heatmaps, rng, flip_prob=0.5, crop_prob=0.3, erase_prob=0.3):
    """Training-time augmentation: flip, crop-and-resize, random erasing.

    A horizontal flip mirrors the heatmap stack (left/right groups swapped);
    heatmaps may be None when the caller trains pose-free. At most one
    erasing rectangle is applied. Returns (image, heatmaps).
    """
    image = image.copy()
    if heatmaps is not None:
        heatmaps = heatmaps.copy()
    h, w = image.shape[:2]

    if rng.random() < flip_prob:
        image = image[:, ::-1].copy()
        if heatmaps is not None:
            heatmaps = flip_heatmap_stack(heatmaps)

    if rng.random() < crop_prob:
        sh = int(h * rng.uniform(0.85, 1.0))
        sw = int(w * rng.uniform(0.85, 1.0))
        r0 = int(rng.integers(0, h - sh + 1))
        c0 = int(rng.integers(0, w - sw + 1))
        rows = r0 + (np.arange(h) * sh) // h
        cols = c0 + (np.arange(w) * sw) // w
        image = image[np.ix_(rows, cols)].copy()

    if rng.random() < erase_prob:
        eh = int(h * rng.uniform(0.1, 0.3))
        ew = int(w * rng.uniform(0.2, 0.6))
        r0 = int(rng.integers(0, h - eh + 1))
        c0 = int(rng.integers(0, w - ew + 1))
        image[r0 : r0 + eh, c0 : c0 + ew] = rng.random((eh, ew, 3), dtype=np.float32)

    return image, heatmaps


def augment_with_joints(image, joints, rng, flip_prob=0.5, crop_prob=0.3, erase_prob=0.3):
    """Geometry-tracking augmentation: transforms joints alongside the image.

    Used by the trainer so pose heatmaps can be re-synthesized from the
    augmented geometry (an estimator would see the augmented image). Flip
    swaps left/right joints; crop-and-resize remaps coordinates and zeroes
    joints that leave the frame; erasing hides the joints it covers.
    """
    image = image.copy()
    joints = joints.copy()
    h, w = image.shape[:2]

    if rng.random() < flip_prob:
        image = image[:, ::-1].copy()
        joints = joints[FLIP_JOINT_ORDER]
        joints[:, 1] = (w - 1) - joints[:, 1]

    if rng.random() < crop_prob:
        sh = int(h * rng.uniform(0.85, 1.0))
        sw = int(w * rng.uniform(0.85, 1.0))
        r0 = int(rng.integers(0, h - sh + 1))
        c0 = int(rng.integers(0, w - sw + 1))
        rows = r0 + (np.arange(h) * sh) // h
        cols = c0 + (np.arange(w) * sw) // w
        image = image[np.ix_(rows, cols)].copy()
        outside = (
            (joints[:, 0] < r0)
            | (joints[:, 0] >= r0 + sh)
            | (joints[:, 1] < c0)
            | (joints[:, 1] >= c0 + sw)
        )
        joints[outside, 2] = 0.0
        joints[:, 0] = (joints[:, 0] - r0) * (h / sh)
        joints[:, 1] = (joints[:, 1] - c0) * (w / sw)

    if rng.random() < erase_prob:
        eh = int(h * rng.uniform(0.1, 0.3))
        ew = int(w * rng.uniform(0.2, 0.6))
        r0 = int(rng.integers(0, h - eh + 1))
        c0 = int(rng.integers(0, w - ew + 1))
        image[r0 : r0 + eh, c0 : c0 + ew] = rng.random((eh, ew, 3), dtype=np.float32)
        covered = (
            (joints[:, 0] >= r0)
            & (joints[:, 0] < r0 + eh)
            & (joints[:, 1] >= c0)
            & (joints[:, 1] < c0 + ew)
        )
        joints[covered, 2] = np.minimum(joints[covered, 2], OCCLUDED_VIS)

    return image, joints
