"""Feature extraction for matching, and the PGFT feature-dump format.

Tag G runs the pose-free main branch alone (no heatmap input is touched);
tags E/F need the foreground branch, P/V the part branch. Features with a
BNNeck head (G, E, V) are returned post-batch-norm; P and F are raw.
"""

import json
import struct

import numpy as np
import torch

from ..errors import DataError, IntegrityError

PGFT_MAGIC = b"PGFT"

FEATURE_TAGS = ("G", "P", "V", "F", "E")


def _bundle_feature(model, bundle, tag):
    if tag == "G":
        return model.head_g.neck(bundle.f_g)
    if tag == "E":
        return model.head_e.neck(bundle.f_e)
    if tag == "V":
        return model.head_v.neck(bundle.f_v)
    if tag == "P":
        return bundle.f_p
    if tag == "F":
        return bundle.f_f
    raise DataError(f"unknown feature tag {tag!r}")


def extract_features(model, dataset, split_name, tag="G", batch_size=128):
    """One c-vector per image of a split: (features, labels, cameras).

    Deterministic: eval mode, frozen batch-norm statistics, no sampling.
    """
    model.require_branch(tag)
    model.eval()
    split = dataset.split(split_name)
    chunks = []
    with torch.no_grad():
        for start in range(0, len(split), batch_size):
            idx = np.arange(start, min(start + batch_size, len(split)))
            images = torch.from_numpy(
                split.images[idx].transpose(0, 3, 1, 2).copy()
            )
            if tag == "G":
                bundle = model(images)
            else:
                heatmaps = torch.from_numpy(dataset.heatmap_batch(split_name, idx))
                bundle = model(images, heatmaps)
            chunks.append(_bundle_feature(model, bundle, tag).numpy())
    features = np.concatenate(chunks, axis=0).astype(np.float32)
    return features, split.labels.copy(), split.cameras.copy()


def write_pgft(path, features, ids=None, cameras=None):
    """Feature dump: magic PGFT, u32 count, u32 dim, row-major float32 rows.

    Identity/camera sidecar goes to ``<path>.meta.json`` when provided.
    """
    features = np.ascontiguousarray(features, dtype=np.float32)
    if features.ndim != 2:
        raise DataError("features must be a 2-D matrix")
    with open(path, "wb") as fh:
        fh.write(PGFT_MAGIC)
        fh.write(struct.pack("<II", features.shape[0], features.shape[1]))
        fh.write(features.tobytes())
    if ids is not None or cameras is not None:
        sidecar = {}
        if ids is not None:
            sidecar["ids"] = [int(i) for i in ids]
        if cameras is not None:
            sidecar["cameras"] = [int(c) for c in cameras]
        with open(str(path) + ".meta.json", "w") as fh:
            json.dump(sidecar, fh, sort_keys=True)


def read_pgft(path):
    """Read a PGFT dump; returns (features, sidecar dict or None)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != PGFT_MAGIC:
            raise IntegrityError(f"{path}: bad feature-dump magic")
        count, dim = struct.unpack("<II", fh.read(8))
        payload = fh.read(4 * count * dim)
    if len(payload) != 4 * count * dim:
        raise IntegrityError(f"{path}: truncated feature dump")
    features = np.frombuffer(payload, dtype="<f4").reshape(count, dim).copy()
    sidecar = None
    try:
        with open(str(path) + ".meta.json") as fh:
            sidecar = json.load(fh)
    except FileNotFoundError:
        pass
    return features, sidecar
