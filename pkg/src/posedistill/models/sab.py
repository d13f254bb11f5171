"""Semantics-aligned branch: part projections, channel-group contrast, fusion.

Each part feature is projected to c/K dims (linear + batch norm + rectifier)
and the projections are concatenated; the global feature is split into K
contiguous channel groups in the same fixed part order. The multi-part
contrastive loss pulls each channel group toward its own (and mirror) part
projection and away from the others, with the part side gradient-blocked.
Fusion adds the global and concatenated part features element-wise, leaving
both sides live so their gradients under any downstream loss coincide.
"""

from dataclasses import dataclass

import torch
import torch.nn.functional as F_
from torch import nn

from ..errors import ConfigurationError, DataError
from ..heatmaps import GROUP_NAMES, MIRROR_GROUP_PAIRS


@dataclass(frozen=True)
class SymmetryGroups:
    """Positive channel-group sets per part index; negatives are the rest."""

    positives: tuple

    def __post_init__(self):
        k = len(self.positives)
        for i, pos in enumerate(self.positives):
            if len(pos) == 0:
                raise ConfigurationError(f"empty positive set for part {i}")
            if i not in pos:
                raise ConfigurationError(f"part {i} missing from its own positive set")
            for j in pos:
                if not (0 <= j < k):
                    raise ConfigurationError(f"positive index {j} out of range for K={k}")
                if i not in self.positives[j]:
                    raise ConfigurationError(f"positive sets not symmetric at ({i}, {j})")

    @property
    def num_parts(self):
        return len(self.positives)

    def negatives(self, i):
        return tuple(j for j in range(self.num_parts) if j not in self.positives[i])


def default_symmetry_groups():
    """Head and torso are self-only; lateral parts pair with their mirror."""
    positives = [(i,) for i in range(len(GROUP_NAMES))]
    for a, b in MIRROR_GROUP_PAIRS:
        positives[a] = (a, b)
        positives[b] = (a, b)
    return SymmetryGroups(tuple(tuple(sorted(p)) for p in positives))


class PartProjection(nn.Module):
    """Per-part reduction to c/K dims: rectified, batch-normalized linear map."""

    def __init__(self, channels, num_parts):
        super().__init__()
        if channels % num_parts:
            raise ConfigurationError(
                f"channels ({channels}) not divisible by part count ({num_parts})"
            )
        out_dim = channels // num_parts
        self.num_parts = num_parts
        self.linears = nn.ModuleList(
            nn.Linear(channels, out_dim, bias=False) for _ in range(num_parts)
        )
        self.norms = nn.ModuleList(nn.BatchNorm1d(out_dim) for _ in range(num_parts))
        self.bypass_bn = False  # unit-test hook: skip batch norm

    def forward(self, f_parts):
        if f_parts.ndim != 3 or f_parts.shape[1] != self.num_parts:
            raise DataError(
                f"expected (N, {self.num_parts}, c) part features, got "
                f"{tuple(f_parts.shape)}"
            )
        outs = []
        for k in range(self.num_parts):
            x = self.linears[k](f_parts[:, k])
            if not self.bypass_bn:
                x = self.norms[k](x)
            outs.append(F_.relu(x))
        return torch.stack(outs, dim=1)


def concat_parts(f_part_groups):
    """(N, K, c/K) -> (N, c), in part-list order."""
    n, k, d = f_part_groups.shape
    return f_part_groups.reshape(n, k * d)


def split_global(f_global, num_parts):
    """(N, c) -> (N, K, c/K) contiguous channel slices in part-list order."""
    n, c = f_global.shape
    if c % num_parts:
        raise ConfigurationError(f"cannot split {c} channels into {num_parts} groups")
    return f_global.reshape(n, num_parts, c // num_parts)


def multi_part_contrastive_loss(
    f_global_groups,
    f_part_groups,
    symmetry=None,
    temperature=1.0,
    normalize=True,
    require_detached=True,
):
    """Multi-positive contrastive loss between channel groups and part features.

    For each part i, logits are dot products of every global channel group
    j with the part projection i; the loss is -log of the positive-set mass.
    Summed over parts, averaged over the batch. The part side is the teacher
    and must arrive gradient-blocked.
    """
    if symmetry is None:
        symmetry = default_symmetry_groups()
    if f_global_groups.shape != f_part_groups.shape:
        raise DataError(
            f"shape mismatch {tuple(f_global_groups.shape)} vs "
            f"{tuple(f_part_groups.shape)}"
        )
    if f_global_groups.shape[1] != symmetry.num_parts:
        raise ConfigurationError(
            f"symmetry table has {symmetry.num_parts} parts, features have "
            f"{f_global_groups.shape[1]}"
        )
    if require_detached:
        assert not f_part_groups.requires_grad, (
            "contrastive teacher parts must be detached (stop-gradient contract)"
        )
    g, p = f_global_groups, f_part_groups
    if normalize:
        g = F_.normalize(g, dim=-1, eps=1e-12)
        p = F_.normalize(p, dim=-1, eps=1e-12)
    # logits[n, i, j] = (global group j) . (part i)
    logits = torch.einsum("njd,nid->nij", g, p) / temperature

    loss = logits.new_zeros(logits.shape[0])
    for i in range(symmetry.num_parts):
        pos = list(symmetry.positives[i])
        all_lse = torch.logsumexp(logits[:, i, :], dim=1)
        pos_lse = torch.logsumexp(logits[:, i, pos], dim=1)
        loss = loss + (all_lse - pos_lse)
    return loss.mean()


def fuse(f_global, f_parts_concat):
    """Element-wise fusion; both inputs stay live for gradients."""
    if f_global.shape != f_parts_concat.shape:
        raise DataError(
            f"shape mismatch {tuple(f_global.shape)} vs {tuple(f_parts_concat.shape)}"
        )
    return f_global + f_parts_concat
