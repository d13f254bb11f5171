"""Keypoint heatmaps: synthesis, semantic-group merging, spatial normalization.

A raw stack holds one channel per COCO joint (17). Channels are merged into
eight body-part groups (head, left/right lower arm, left/right knee,
left/right ankle, torso) by element-wise max, then each group channel is
normalized with a spatial softmax so it sums to one over the grid.

Also implements the ``PGHM`` binary record format used to persist per-image
heatmap stacks, with a plain-text index mapping image id -> byte offset.
"""

import struct

import numpy as np

from .errors import ConfigurationError, DataError, IntegrityError, NumericError

# COCO keypoint order as produced by standard 17-joint estimators.
COCO_JOINTS = (
    "nose",
    "left_eye",
    "right_eye",
    "left_ear",
    "right_ear",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hip",
    "right_hip",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
)

# Fixed group order; SAB channel groups and flip mirroring rely on it.
GROUP_NAMES = (
    "head",
    "left_lower_arm",
    "right_lower_arm",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
    "torso",
)

# head = the five facial joints; torso = shoulders + hips;
# lower arm = elbow + wrist; knees and ankles are singletons.
DEFAULT_GROUPING = {
    "nose": "head",
    "left_eye": "head",
    "right_eye": "head",
    "left_ear": "head",
    "right_ear": "head",
    "left_elbow": "left_lower_arm",
    "left_wrist": "left_lower_arm",
    "right_elbow": "right_lower_arm",
    "right_wrist": "right_lower_arm",
    "left_knee": "left_knee",
    "right_knee": "right_knee",
    "left_ankle": "left_ankle",
    "right_ankle": "right_ankle",
    "left_shoulder": "torso",
    "right_shoulder": "torso",
    "left_hip": "torso",
    "right_hip": "torso",
}

# Pairs of group indices swapped by a horizontal flip.
MIRROR_GROUP_PAIRS = ((1, 2), (3, 4), (5, 6))

NUM_JOINTS = len(COCO_JOINTS)
NUM_GROUPS = len(GROUP_NAMES)

PGHM_MAGIC = b"PGHM"


def merge_keypoints(raw, grouping=None):
    """Merge a (17, h, w) joint stack into an unnormalized (8, h, w) group stack.

    Each group channel is the element-wise max over its member joint channels.
    """
    if grouping is None:
        grouping = DEFAULT_GROUPING
    raw = np.asarray(raw, dtype=np.float64)
    if raw.shape[0] != NUM_JOINTS:
        raise DataError(f"expected {NUM_JOINTS} joint channels, got {raw.shape[0]}")
    unknown = set(grouping) - set(COCO_JOINTS)
    if unknown:
        raise ConfigurationError(f"unknown joint names in grouping: {sorted(unknown)}")
    missing = set(COCO_JOINTS) - set(grouping)
    if missing:
        raise ConfigurationError(f"grouping does not cover joints: {sorted(missing)}")
    bad_groups = set(grouping.values()) - set(GROUP_NAMES)
    if bad_groups:
        raise ConfigurationError(f"unknown group names: {sorted(bad_groups)}")

    merged = np.zeros((NUM_GROUPS,) + raw.shape[1:], dtype=np.float64)
    for joint_idx, joint in enumerate(COCO_JOINTS):
        group_idx = GROUP_NAMES.index(grouping[joint])
        np.maximum(merged[group_idx], raw[joint_idx], out=merged[group_idx])
    return merged


def normalize_heatmap(unnormalized):
    """Spatial softmax over all h*w entries of one map; output sums to 1."""
    m = np.asarray(unnormalized, dtype=np.float64)
    if not np.all(np.isfinite(m)):
        raise NumericError("heatmap contains non-finite entries")
    shifted = m - m.max()  # stabilize exp for out-of-range inputs
    e = np.exp(shifted)
    return e / e.sum()


def build_heatmap_stack(raw, grouping=None):
    """Merge joints into groups and spatially normalize every group channel."""
    merged = merge_keypoints(raw, grouping)
    return np.stack([normalize_heatmap(ch) for ch in merged])


def synthesize_heatmaps(joints, sigma, grid_shape):
    """Render a (17, h, w) Gaussian stack from joint (row, col, visibility) triples.

    Coordinates are in heatmap-grid pixels and may lie outside the grid
    (cropped-away joints). Amplitude equals the joint visibility.
    """
    if sigma <= 0:
        raise ConfigurationError(f"sigma must be positive, got {sigma}")
    joints = np.asarray(joints, dtype=np.float64)
    if joints.shape != (NUM_JOINTS, 3):
        raise DataError(f"expected joints of shape (17, 3), got {joints.shape}")
    h, w = grid_shape
    rows = np.arange(h, dtype=np.float64)[:, None]
    cols = np.arange(w, dtype=np.float64)[None, :]
    stack = np.zeros((NUM_JOINTS, h, w), dtype=np.float64)
    for j, (r, c, vis) in enumerate(joints):
        if vis <= 0:
            continue
        d2 = (rows - r) ** 2 + (cols - c) ** 2
        stack[j] = vis * np.exp(-d2 / (2.0 * sigma * sigma))
    return stack


def flip_heatmap_stack(stack):
    """Mirror an (8, h, w) group stack horizontally, swapping left/right groups."""
    flipped = stack[:, :, ::-1].copy()
    for a, b in MIRROR_GROUP_PAIRS:
        flipped[[a, b]] = flipped[[b, a]]
    return flipped


class PghmWriter:
    """Sequential writer for the PGHM heatmap container.

    Record layout per image: magic ``PGHM``, u32 h, u32 w, u32 channels,
    then channel-major row-major float32 payload. A sidecar text index maps
    image id -> byte offset of its record.
    """

    def __init__(self, path):
        self.path = str(path)
        self.index_path = self.path + ".idx"
        self._fh = open(self.path, "wb")
        self._offsets = {}

    def write(self, image_id, stack):
        stack = np.ascontiguousarray(stack, dtype=np.float32)
        if stack.ndim != 3:
            raise DataError("heatmap stack must be (channels, h, w)")
        k, h, w = stack.shape
        self._offsets[str(image_id)] = self._fh.tell()
        self._fh.write(PGHM_MAGIC)
        self._fh.write(struct.pack("<III", h, w, k))
        self._fh.write(stack.tobytes())

    def close(self):
        self._fh.close()
        with open(self.index_path, "w") as fh:
            for image_id, offset in self._offsets.items():
                fh.write(f"{image_id} {offset}\n")

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


class PghmReader:
    """Random-access reader over a PGHM file using its text index."""

    def __init__(self, path):
        self.path = str(path)
        self.index_path = self.path + ".idx"
        self._offsets = {}
        with open(self.index_path) as fh:
            for line in fh:
                image_id, offset = line.split()
                self._offsets[image_id] = int(offset)
        self._fh = open(self.path, "rb")

    def ids(self):
        return list(self._offsets)

    def read(self, image_id):
        offset = self._offsets.get(str(image_id))
        if offset is None:
            raise DataError(f"image id {image_id!r} not in heatmap index")
        self._fh.seek(offset)
        magic = self._fh.read(4)
        if magic != PGHM_MAGIC:
            raise IntegrityError(f"bad heatmap record magic at offset {offset}")
        h, w, k = struct.unpack("<III", self._fh.read(12))
        payload = self._fh.read(4 * h * w * k)
        if len(payload) != 4 * h * w * k:
            raise IntegrityError("truncated heatmap record")
        return np.frombuffer(payload, dtype=np.float32).reshape(k, h, w).copy()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False
