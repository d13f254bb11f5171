"""Foreground-enhanced branch: attention over the feature map and distillation.

The pooled part-feature average acts as a query against every spatial
position, a softmax over positions gives the attention map, and attentive
pooling yields the foreground feature. Adding the global feature gives the
foreground-enhanced feature, whose gap to the global feature (teacher
detached) is the consistent distillation loss.
"""

import torch
import torch.nn.functional as F_

from ..errors import DataError, NumericError


def foreground_attention(feature_map, f_query, normalized=False, temperature=1.0):
    """Softmax attention scores (N, h, w) from per-position dot products.

    By default the raw dot product feature_map[:, :, i, j] . f_query is used;
    normalized=True replaces it with cosine similarity of the two operands.
    """
    if feature_map.shape[1] != f_query.shape[-1]:
        raise DataError(
            f"query dim {f_query.shape[-1]} does not match feature channels "
            f"{feature_map.shape[1]}"
        )
    fm, q = feature_map, f_query
    if normalized:
        fm = F_.normalize(fm, dim=1, eps=1e-12)
        q = F_.normalize(q, dim=-1, eps=1e-12)
    logits = torch.einsum("nchw,nc->nhw", fm, q) / temperature
    if not torch.isfinite(logits).all():
        raise NumericError("non-finite attention logits")
    n, h, w = logits.shape
    return torch.softmax(logits.reshape(n, h * w), dim=1).reshape(n, h, w)


def attentive_pool(feature_map, attention):
    """Attention-weighted sum of position features: (N, c)."""
    if feature_map.shape[-2:] != attention.shape[-2:]:
        raise DataError(
            f"attention size {tuple(attention.shape[-2:])} does not match "
            f"feature map {tuple(feature_map.shape[-2:])}"
        )
    return torch.einsum("nhw,nchw->nc", attention, feature_map)


def enhance(f_foreground, f_global):
    """Foreground-enhanced feature: element-wise sum of the two features."""
    if f_foreground.shape != f_global.shape:
        raise DataError(
            f"shape mismatch {tuple(f_foreground.shape)} vs {tuple(f_global.shape)}"
        )
    return f_foreground + f_global


def consistent_loss(f_global, f_enhanced, require_detached=True):
    """Squared L2 gap per image, averaged over the batch.

    f_enhanced is the teacher and must arrive gradient-blocked; gradients
    flow into f_global only.
    """
    if f_global.shape != f_enhanced.shape:
        raise DataError(
            f"shape mismatch {tuple(f_global.shape)} vs {tuple(f_enhanced.shape)}"
        )
    if require_detached:
        assert not f_enhanced.requires_grad, (
            "consistent_loss teacher must be detached (stop-gradient contract)"
        )
    return (f_global - f_enhanced).pow(2).sum(dim=-1).mean()
