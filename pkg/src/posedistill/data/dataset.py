"""Labeled synthetic dataset with train/query/gallery splits.

Split composition per identity follows the partial-dataset rule: 50%
holistic images, 25% upper-half crops, 25% upper-third crops. Train and
test identities are disjoint; every identity appears under at least two
cameras. Generation is a pure function of (config, master seed).

Persisted layout: ``meta.json`` (labels, cameras, kinds, joints, per-group
visibility), lossless PNG images under ``images/``, and one PGHM heatmap
container per split.
"""

import hashlib
import json
import os

import numpy as np
from PIL import Image

from ..errors import ConfigurationError, DataError
from ..heatmaps import (
    COCO_JOINTS,
    DEFAULT_GROUPING,
    GROUP_NAMES,
    NUM_GROUPS,
    PghmReader,
    PghmWriter,
    build_heatmap_stack,
    synthesize_heatmaps,
)
from .synthetic import make_cameras, make_identity_spec, occlude, partial_crop, render_sample

KINDS = ("holistic", "half", "third")

_GROUP_MEMBER_IDX = {
    g: [i for i, j in enumerate(COCO_JOINTS) if DEFAULT_GROUPING[j] == g]
    for g in GROUP_NAMES
}


class SplitData:
    """Arrays of one dataset split, kept fully in memory."""

    def __init__(self, images, labels, cameras, kinds, joints, visibility, heatmaps, image_ids):
        self.images = images
        self.labels = labels
        self.cameras = cameras
        self.kinds = kinds
        self.joints = joints
        self.visibility = visibility
        self.heatmaps = heatmaps
        self.image_ids = image_ids

    def __len__(self):
        return len(self.labels)


class SyntheticDataset:
    """Train/query/gallery splits plus generation metadata.

    Heatmap reads go through heatmap_batch() so that pose-free evaluation
    paths can be shown to touch zero heatmap inputs.
    """

    def __init__(self, splits, meta):
        self.splits = splits
        self.meta = meta
        self.heatmap_reads = 0

    @property
    def image_shape(self):
        return tuple(self.meta["image_shape"])

    @property
    def heatmap_shape(self):
        return tuple(self.meta["heatmap_shape"])

    def split(self, name):
        if name not in self.splits:
            raise DataError(f"no split named {name!r}")
        return self.splits[name]

    def heatmap_batch(self, split_name, indices):
        self.heatmap_reads += 1
        return self.split(split_name).heatmaps[indices]

    def save(self, root):
        os.makedirs(root, exist_ok=True)
        img_dir = os.path.join(root, "images")
        os.makedirs(img_dir, exist_ok=True)
        meta = {"format": "posedistill-dataset-v1", **self.meta, "splits": {}}
        for name, split in self.splits.items():
            records = []
            with PghmWriter(os.path.join(root, f"{name}.pghm")) as hm_writer:
                for i, image_id in enumerate(split.image_ids):
                    arr = np.clip(np.rint(split.images[i] * 255.0), 0, 255).astype(np.uint8)
                    Image.fromarray(arr).save(os.path.join(img_dir, f"{image_id}.png"))
                    hm_writer.write(image_id, split.heatmaps[i])
                    records.append(
                        {
                            "id": image_id,
                            "label": int(split.labels[i]),
                            "camera": int(split.cameras[i]),
                            "kind": KINDS[int(split.kinds[i])],
                            "visibility": [float(v) for v in split.visibility[i]],
                            "joints": [[float(x) for x in row] for row in split.joints[i]],
                        }
                    )
            meta["splits"][name] = records
        with open(os.path.join(root, "meta.json"), "w") as fh:
            json.dump(meta, fh, sort_keys=True, indent=1)

    @classmethod
    def load(cls, root):
        meta_path = os.path.join(root, "meta.json")
        if not os.path.isfile(meta_path):
            raise DataError(f"no dataset at {root!r} (missing meta.json)")
        with open(meta_path) as fh:
            meta = json.load(fh)
        split_records = meta.pop("splits")
        meta.pop("format", None)
        splits = {}
        for name, records in split_records.items():
            images, labels, cameras, kinds, joints, visibility, heatmaps, ids = (
                [], [], [], [], [], [], [], [])
            with PghmReader(os.path.join(root, f"{name}.pghm")) as reader:
                for rec in records:
                    img = np.asarray(
                        Image.open(os.path.join(root, "images", rec["id"] + ".png")),
                        dtype=np.float32,
                    ) / 255.0
                    images.append(img)
                    labels.append(rec["label"])
                    cameras.append(rec["camera"])
                    kinds.append(KINDS.index(rec["kind"]))
                    joints.append(rec["joints"])
                    visibility.append(rec["visibility"])
                    heatmaps.append(reader.read(rec["id"]))
                    ids.append(rec["id"])
            splits[name] = SplitData(
                images=np.stack(images),
                labels=np.asarray(labels, dtype=np.int64),
                cameras=np.asarray(cameras, dtype=np.int64),
                kinds=np.asarray(kinds, dtype=np.int8),
                joints=np.asarray(joints, dtype=np.float64),
                visibility=np.asarray(visibility, dtype=np.float32),
                heatmaps=np.stack(heatmaps),
                image_ids=ids,
            )
        return cls(splits, meta)


def manifest_checksum(root):
    """SHA-256 over the dataset manifest, for reproducibility checks."""
    with open(os.path.join(root, "meta.json"), "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def group_visibility(joints):
    """Per-group visibility = max over member joints."""
    vis = np.zeros(NUM_GROUPS, dtype=np.float32)
    for g, group in enumerate(GROUP_NAMES):
        vis[g] = max(joints[i, 2] for i in _GROUP_MEMBER_IDX[group])
    return vis


def joints_to_heatmap_grid(joints, image_shape, heatmap_shape):
    """Map joint pixel coordinates into heatmap grid coordinates (center-aligned)."""
    H, W = image_shape
    hh, wh = heatmap_shape
    out = joints.copy()
    out[:, 0] = (joints[:, 0] + 0.5) * (hh / H) - 0.5
    out[:, 1] = (joints[:, 1] + 0.5) * (wh / W) - 0.5
    return out


def _kind_plan(n_per_id):
    if n_per_id % 4:
        raise ConfigurationError(
            f"images per identity must be divisible by 4, got {n_per_id}"
        )
    return [0] * (n_per_id // 2) + [1] * (n_per_id // 4) + [2] * (n_per_id // 4)


def build_partial_duke_split(cfg, heatmap_shape, master_seed=None):
    """Generate the full dataset (train/query/gallery) from a DataConfig."""
    seed = cfg.seed if master_seed is None else master_seed
    cameras = make_cameras(cfg.num_cameras, seed)
    image_shape = (cfg.image_height, cfg.image_width)

    plan = {
        "train": (range(cfg.num_ids), cfg.images_per_id),
        "query": (range(cfg.num_ids, cfg.num_ids + cfg.test_num_ids), cfg.query_per_id),
        "gallery": (range(cfg.num_ids, cfg.num_ids + cfg.test_num_ids), cfg.gallery_per_id),
    }

    splits = {}
    for split_idx, (name, (ids, n_per_id)) in enumerate(plan.items()):
        images, labels, cams, kinds, all_joints, vis, heatmaps, image_ids = (
            [], [], [], [], [], [], [], [])
        counter = 0
        for ident in ids:
            spec = make_identity_spec(ident, seed)
            id_rng = np.random.default_rng((seed, split_idx, ident, 0xBA7C))
            kind_list = _kind_plan(n_per_id)
            id_rng.shuffle(kind_list)
            cam_list = [j % cfg.num_cameras for j in range(n_per_id)]
            id_rng.shuffle(cam_list)
            for j in range(n_per_id):
                sample_rng = np.random.default_rng((seed, split_idx, ident, j, 0xD5))
                img, joints = render_sample(
                    spec,
                    cameras[cam_list[j]],
                    rng_seed=split_idx * 10_000_019 + j,
                    height=cfg.image_height,
                    width=cfg.image_width,
                    clutter=cfg.background_clutter,
                )
                if kind_list[j] == 1:
                    img, joints = partial_crop(img, joints, "half")
                elif kind_list[j] == 2:
                    img, joints = partial_crop(img, joints, "third")
                if sample_rng.random() < cfg.occlusion_prob:
                    img, joints = occlude(
                        img, joints, (cfg.occlusion_lo, cfg.occlusion_hi), sample_rng
                    )
                grid_joints = joints_to_heatmap_grid(joints, image_shape, heatmap_shape)
                raw = synthesize_heatmaps(grid_joints, cfg.heatmap_sigma, heatmap_shape)
                stack = build_heatmap_stack(raw).astype(np.float32)

                images.append(img.astype(np.float32))
                labels.append(ident)
                cams.append(cam_list[j])
                kinds.append(kind_list[j])
                all_joints.append(joints)
                vis.append(group_visibility(joints))
                heatmaps.append(stack)
                image_ids.append(f"{name}_{counter:05d}")
                counter += 1
        splits[name] = SplitData(
            images=np.stack(images),
            labels=np.asarray(labels, dtype=np.int64),
            cameras=np.asarray(cams, dtype=np.int64),
            kinds=np.asarray(kinds, dtype=np.int8),
            joints=np.asarray(all_joints, dtype=np.float64),
            visibility=np.stack(vis),
            heatmaps=np.stack(heatmaps),
            image_ids=image_ids,
        )

    meta = {
        "seed": int(seed),
        "image_shape": list(image_shape),
        "heatmap_shape": list(heatmap_shape),
        "heatmap_sigma": cfg.heatmap_sigma,
        "num_cameras": cfg.num_cameras,
        "num_train_ids": cfg.num_ids,
        "num_test_ids": cfg.test_num_ids,
    }
    return SyntheticDataset(splits, meta)
