"""Three-branch network: main branch plus the two pose-guided branches.

Training forwards images together with part heatmaps and fills an
EmbeddingBundle with every branch feature; inference with the main branch
alone needs no heatmaps at all. Parameters carry a branch tag (backbone,
mb_head, feb, sab) so checkpoints can be stripped to the pose-free subset.
"""

from dataclasses import dataclass, field
from typing import Optional

import torch
from torch import nn

from ..errors import CapabilityError, DataError
from ..losses import BNNeckHead
from .backbone import ConvBackbone, global_pool, part_pool
from .feb import attentive_pool, enhance, foreground_attention
from .sab import PartProjection, concat_parts, default_symmetry_groups, fuse

# Which feature is gradient-blocked inside which distillation loss.
DETACH_CONTRACT = {
    "consistent_loss": "f_e",
    "multi_part_contrastive_loss": "f_pk",
}


@dataclass
class EmbeddingBundle:
    """Per-batch features of all branches; pose-guided entries may be None."""

    feature_map: torch.Tensor
    f_g: torch.Tensor
    f_lk: Optional[torch.Tensor] = None
    f_l: Optional[torch.Tensor] = None
    attention: Optional[torch.Tensor] = None
    f_f: Optional[torch.Tensor] = None
    f_e: Optional[torch.Tensor] = None
    f_pk: Optional[torch.Tensor] = None
    f_p: Optional[torch.Tensor] = None
    f_v: Optional[torch.Tensor] = None
    detach_contract: dict = field(default_factory=lambda: dict(DETACH_CONTRACT))


class PoseDistillNet(nn.Module):
    """Backbone + BNNeck heads + optional foreground/part branches."""

    def __init__(
        self,
        num_ids,
        channels=64,
        blocks=4,
        base_width=16,
        num_groups=8,
        sab=True,
        feb=True,
        attention_normalized=False,
        attention_temperature=1.0,
        mcl_temperature=1.0,
        mcl_normalize=True,
    ):
        super().__init__()
        self.num_ids = num_ids
        self.num_groups = num_groups
        self.sab = sab
        self.feb = feb
        self.attention_normalized = attention_normalized
        self.attention_temperature = attention_temperature
        self.mcl_temperature = mcl_temperature
        self.mcl_normalize = mcl_normalize
        self.symmetry = default_symmetry_groups()

        self.backbone = ConvBackbone(channels=channels, blocks=blocks, base_width=base_width)
        self.head_g = BNNeckHead(channels, num_ids)
        if feb:
            self.head_e = BNNeckHead(channels, num_ids)
        if sab:
            self.projection = PartProjection(channels, num_groups)
            self.head_v = BNNeckHead(channels, num_ids)

    def arch_meta(self):
        """Constructor arguments needed to rebuild this architecture."""
        return {
            "num_ids": self.num_ids,
            "channels": self.backbone.out_channels,
            "blocks": len(self.backbone.blocks),
            "base_width": self.backbone.blocks[0][0].out_channels,
            "num_groups": self.num_groups,
            "sab": self.sab,
            "feb": self.feb,
            "attention_normalized": self.attention_normalized,
            "attention_temperature": self.attention_temperature,
            "mcl_temperature": self.mcl_temperature,
            "mcl_normalize": self.mcl_normalize,
        }

    def branch_of(self, name):
        """Branch tag of a parameter/buffer name, for the checkpoint manifest."""
        top = name.split(".", 1)[0]
        return {
            "backbone": "backbone",
            "head_g": "mb_head",
            "head_e": "feb",
            "projection": "sab",
            "head_v": "sab",
        }[top]

    def forward(self, images, heatmaps=None):
        """Compute branch features; heatmaps=None restricts to the main branch."""
        feature_map = self.backbone(images)
        f_g = global_pool(feature_map)
        bundle = EmbeddingBundle(feature_map=feature_map, f_g=f_g)
        if heatmaps is None:
            return bundle
        if heatmaps.shape[1] != self.num_groups:
            raise DataError(
                f"expected {self.num_groups} heatmap channels, got {heatmaps.shape[1]}"
            )

        f_lk, f_l = part_pool(feature_map, heatmaps)
        bundle.f_lk, bundle.f_l = f_lk, f_l

        if self.feb:
            attention = foreground_attention(
                feature_map,
                f_l,
                normalized=self.attention_normalized,
                temperature=self.attention_temperature,
            )
            f_f = attentive_pool(feature_map, attention)
            bundle.attention = attention
            bundle.f_f = f_f
            bundle.f_e = enhance(f_f, f_g)

        if self.sab:
            f_pk = self.projection(f_lk)
            f_p = concat_parts(f_pk)
            bundle.f_pk = f_pk
            bundle.f_p = f_p
            bundle.f_v = fuse(f_g, f_p)

        return bundle

    def require_branch(self, tag):
        """Raise CapabilityError when a feature tag needs a missing branch."""
        needs = {"G": None, "P": "sab", "V": "sab", "F": "feb", "E": "feb"}
        if tag not in needs:
            raise CapabilityError(f"unknown feature tag {tag!r}")
        branch = needs[tag]
        if branch is not None and not getattr(self, branch):
            raise CapabilityError(
                f"feature tag {tag!r} requires the {branch.upper()} branch, "
                "which this model/checkpoint does not carry"
            )


def build_model(num_ids, model_cfg, sab=True, feb=True):
    """Construct a PoseDistillNet from a ModelConfig plus branch switches."""
    return PoseDistillNet(
        num_ids=num_ids,
        channels=model_cfg.channels,
        blocks=model_cfg.blocks,
        base_width=model_cfg.base_width,
        num_groups=model_cfg.num_groups,
        sab=sab,
        feb=feb,
        attention_normalized=model_cfg.attention_normalized,
        attention_temperature=model_cfg.attention_temperature,
        mcl_temperature=model_cfg.mcl_temperature,
        mcl_normalize=model_cfg.mcl_normalize,
    )
