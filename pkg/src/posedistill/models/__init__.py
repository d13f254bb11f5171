from .backbone import ConvBackbone, global_pool, part_pool
from .feb import attentive_pool, consistent_loss, enhance, foreground_attention
from .network import DETACH_CONTRACT, EmbeddingBundle, PoseDistillNet, build_model
from .sab import (
    PartProjection,
    SymmetryGroups,
    concat_parts,
    default_symmetry_groups,
    fuse,
    multi_part_contrastive_loss,
    split_global,
)

__all__ = [
    "ConvBackbone",
    "DETACH_CONTRACT",
    "EmbeddingBundle",
    "PartProjection",
    "PoseDistillNet",
    "SymmetryGroups",
    "attentive_pool",
    "build_model",
    "concat_parts",
    "consistent_loss",
    "default_symmetry_groups",
    "enhance",
    "foreground_attention",
    "fuse",
    "global_pool",
    "multi_part_contrastive_loss",
    "part_pool",
    "split_global",
]
