"""ReID losses: BNNeck identity classification, batch-hard triplet, overall loss.

Each supervised feature (global, foreground-enhanced, fused) gets its own
BNNeck head: identity cross-entropy consumes the post-batch-norm feature,
the triplet loss consumes the raw pre-batch-norm feature. The softmax-form
triplet exists for the gradient-verification harness; training uses the
batch-hard form.
"""

from dataclasses import dataclass

import torch
import torch.nn.functional as F_
from torch import nn

from .errors import DataError
from .models.feb import consistent_loss
from .models.sab import multi_part_contrastive_loss, split_global


@dataclass
class LossWeights:
    lambda_cl: float = 0.25
    lambda_mcl: float = 0.25
    margin: float = 0.3
    id_weight: float = 1.0
    triplet_weight: float = 1.0


class BNNeckHead(nn.Module):
    """Batch norm bottleneck + bias-free linear classifier.

    neck() returns the post-BN embedding used for matching; forward()
    returns classification logits.
    """

    def __init__(self, channels, num_ids):
        super().__init__()
        self.bn = nn.BatchNorm1d(channels)
        self.bn.bias.requires_grad_(False)
        self.classifier = nn.Linear(channels, num_ids, bias=False)
        nn.init.normal_(self.classifier.weight, std=0.001)

    def neck(self, features):
        return self.bn(features)

    def forward(self, features):
        return self.classifier(self.bn(features))


def id_loss(features, labels, head):
    """Mean cross-entropy of softmax over identity logits."""
    num_ids = head.classifier.out_features
    if labels.min() < 0 or labels.max() >= num_ids:
        raise DataError(
            f"labels outside classifier range [0, {num_ids}): "
            f"[{int(labels.min())}, {int(labels.max())}]"
        )
    return F_.cross_entropy(head(features), labels)


def pairwise_euclidean(features):
    """(N, N) Euclidean distance matrix via explicit differences.

    Squared differences accumulate channel by channel (strict left-to-right,
    so values agree bit-for-bit with a naive per-pair loop); the squared
    matrix is floored at 1e-12 before the sqrt so the zero diagonal cannot
    emit NaN gradients.
    """
    n, c = features.shape
    sq = features.new_zeros(n, n)
    for ch in range(c):
        diff = features[:, ch].unsqueeze(1) - features[:, ch].unsqueeze(0)
        sq = sq + diff * diff
    return sq.clamp_min(1e-12).sqrt()


def _check_pk_structure(labels):
    uniq, counts = torch.unique(labels, return_counts=True)
    if len(uniq) < 2:
        raise DataError("batch-hard mining needs at least two identities per batch")
    if counts.min() < 2:
        raise DataError("batch-hard mining needs >= 2 samples per identity")


def triplet_batch_hard(features, labels, margin=0.3):
    """Batch-hard triplet loss with Euclidean distances.

    Per anchor: hardest positive is the farthest same-identity sample,
    hardest negative the nearest other-identity sample; hinge at the margin,
    averaged over anchors.
    """
    _check_pk_structure(labels)
    dist = pairwise_euclidean(features)
    same = labels.unsqueeze(0) == labels.unsqueeze(1)
    eye = torch.eye(len(labels), dtype=torch.bool, device=labels.device)
    pos_mask = same & ~eye
    neg_mask = ~same

    pos_dist = torch.where(pos_mask, dist, dist.new_tensor(float("-inf"))).max(dim=1).values
    neg_dist = torch.where(neg_mask, dist, dist.new_tensor(float("inf"))).min(dim=1).values
    per_anchor = F_.relu(pos_dist - neg_dist + margin)
    # sequential reduction: value reproducible against a naive per-anchor loop
    total = per_anchor.new_zeros(())
    for a in range(len(per_anchor)):
        total = total + per_anchor[a]
    return total / len(per_anchor)


def softmax_triplet(v_anchor, v_positive, v_negative):
    """Softmax-form triplet on one (anchor, positive, negative) triple.

    log(1 + exp(a.n - a.p)), evaluated with log1p-style stabilization.
    Accepts batched (N, c) or single (c,) vectors.
    """
    if not (v_anchor.shape == v_positive.shape == v_negative.shape):
        raise DataError("triplet vectors must share one shape")
    pos = (v_anchor * v_positive).sum(dim=-1)
    neg = (v_anchor * v_negative).sum(dim=-1)
    return F_.softplus(neg - pos).mean()


def reid_loss(features, labels, head, weights):
    """Identity + batch-hard triplet on one supervised feature."""
    return weights.id_weight * id_loss(features, labels, head) + (
        weights.triplet_weight * triplet_batch_hard(features, labels, weights.margin)
    )


def total_loss(model, bundle, labels, cfg):
    """Overall training objective with per-term breakdown.

    Always includes the main-branch ReID term; FEB adds a ReID term on the
    enhanced feature plus (optionally) the consistent distillation loss,
    SAB adds a ReID term on the fused (or, without interaction, the
    concatenated-part) feature plus (optionally) the multi-part contrastive
    distillation loss. Disabled terms contribute exactly zero.
    """
    weights = LossWeights(
        lambda_cl=cfg.lambda_cl,
        lambda_mcl=cfg.lambda_mcl,
        margin=cfg.margin,
        id_weight=cfg.id_weight,
        triplet_weight=cfg.triplet_weight,
    )
    zero = bundle.f_g.new_zeros(())
    breakdown = {}

    l_reid_g = reid_loss(bundle.f_g, labels, model.head_g, weights)
    breakdown["reid_g"] = l_reid_g
    total = l_reid_g

    if cfg.feb:
        if bundle.f_e is None:
            raise DataError("FEB enabled but bundle has no enhanced feature")
        l_reid_e = reid_loss(bundle.f_e, labels, model.head_e, weights)
        breakdown["reid_e"] = l_reid_e
        total = total + l_reid_e
    else:
        breakdown["reid_e"] = zero

    if cfg.sab:
        supervised = bundle.f_v if cfg.interaction else bundle.f_p
        if supervised is None:
            raise DataError("SAB enabled but bundle has no part-aligned feature")
        l_reid_v = reid_loss(supervised, labels, model.head_v, weights)
        breakdown["reid_v"] = l_reid_v
        total = total + l_reid_v
    else:
        breakdown["reid_v"] = zero

    if cfg.cl:
        l_cl = consistent_loss(bundle.f_g, bundle.f_e.detach())
        breakdown["cl"] = l_cl
        total = total + weights.lambda_cl * l_cl
    else:
        breakdown["cl"] = zero

    if cfg.mcl:
        f_gk = split_global(bundle.f_g, model.num_groups)
        l_mcl = multi_part_contrastive_loss(
            f_gk,
            bundle.f_pk.detach(),
            symmetry=model.symmetry,
            temperature=model.mcl_temperature,
            normalize=model.mcl_normalize,
        )
        breakdown["mcl"] = l_mcl
        total = total + weights.lambda_mcl * l_mcl
    else:
        breakdown["mcl"] = zero

    breakdown["total"] = total
    return total, breakdown
