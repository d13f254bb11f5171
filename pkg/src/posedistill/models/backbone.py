"""Convolutional feature extractor and the global / pose-guided pooling ops.

The backbone is a stack of stride-2 Conv-BN-ReLU blocks producing an
(N, c, h, w) feature map; spatial size shrinks by 2^blocks. Pooling keeps
the mean-pool convention throughout: part pooling multiplies the feature
map by a (spatially normalized) heatmap channel and then mean-pools, so
magnitudes scale with 1/(h*w); downstream batch norm absorbs the scale.
"""

import torch
from torch import nn

from ..errors import DataError


def feature_map_shape(image_shape, blocks):
    """(h, w) after `blocks` stride-2 reductions of an (H, W) input."""
    h, w = image_shape
    for _ in range(blocks):
        h = (h + 1) // 2
        w = (w + 1) // 2
    return h, w


class ConvBackbone(nn.Module):
    """Small configurable conv net; each block halves the spatial size."""

    def __init__(self, channels=64, blocks=4, base_width=16, in_channels=3):
        super().__init__()
        widths = [
            int(round(base_width + (channels - base_width) * i / max(blocks - 1, 1)))
            for i in range(blocks)
        ]
        widths[-1] = channels
        layers = []
        prev = in_channels
        for width in widths:
            layers.append(
                nn.Sequential(
                    nn.Conv2d(prev, width, kernel_size=3, stride=2, padding=1, bias=False),
                    nn.BatchNorm2d(width),
                    nn.ReLU(inplace=True),
                )
            )
            prev = width
        self.blocks = nn.ModuleList(layers)
        self.out_channels = channels
        self.stride = 2 ** blocks

    def forward(self, images):
        if images.ndim != 4 or images.shape[1] != self.blocks[0][0].in_channels:
            raise DataError(
                f"expected (N, {self.blocks[0][0].in_channels}, H, W) images, "
                f"got shape {tuple(images.shape)}"
            )
        x = images
        for block in self.blocks:
            x = block(x)
        return x

    def feature_shape(self, image_shape):
        """(h, w) of the feature map for an (H, W) input."""
        return feature_map_shape(image_shape, len(self.blocks))


def global_pool(feature_map):
    """Global average pool: (N, c, h, w) -> (N, c)."""
    return feature_map.mean(dim=(2, 3))


def part_pool(feature_map, heatmaps):
    """Pose-guided pooling of an (N, c, h, w) map with (N, K, h, w) heatmaps.

    Each part feature is the mean over positions of the feature map weighted
    by that part's heatmap channel (broadcast across all c channels).
    Returns (f_parts (N, K, c), f_part_mean (N, c)).
    """
    if feature_map.shape[-2:] != heatmaps.shape[-2:]:
        raise DataError(
            f"heatmap spatial size {tuple(heatmaps.shape[-2:])} does not match "
            f"feature map {tuple(feature_map.shape[-2:])}"
        )
    n, c, h, w = feature_map.shape
    f_parts = torch.einsum("nkhw,nchw->nkc", heatmaps, feature_map) / (h * w)
    return f_parts, f_parts.mean(dim=1)
