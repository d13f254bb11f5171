from .synthetic import (
    CameraModel,
    IdentitySpec,
    augment,
    body_bbox,
    crop_rows,
    make_cameras,
    make_identity_spec,
    occlude,
    partial_crop,
    render_sample,
)
from .dataset import SplitData, SyntheticDataset, build_partial_duke_split

__all__ = [
    "CameraModel",
    "IdentitySpec",
    "SplitData",
    "SyntheticDataset",
    "augment",
    "body_bbox",
    "build_partial_duke_split",
    "crop_rows",
    "make_cameras",
    "make_identity_spec",
    "occlude",
    "partial_crop",
    "render_sample",
]
