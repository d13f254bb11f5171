"""Parameter counts and multiply-add estimates per matching feature.

Multiply-adds come from a symbolic pass over layer shapes: convolutions
count out_h*out_w*c_out*c_in*k_h*k_w, linear layers in*out, batch norm and
pooling one multiply-add per element; activations are free. The parameter
count covers exactly the modules an inference path for the tag needs, so
the pose-free global-feature path of the full model costs the same as the
baseline model.
"""

from torch import nn


def _conv_out(size, conv):
    h, w = size
    kh, kw = conv.kernel_size
    sh, sw = conv.stride
    ph, pw = conv.padding
    return ((h + 2 * ph - kh) // sh + 1, (w + 2 * pw - kw) // sw + 1)


def _backbone_pass(backbone, image_shape):
    detail = []
    size = image_shape
    for i, block in enumerate(backbone.blocks):
        for layer in block:
            if isinstance(layer, nn.Conv2d):
                out = _conv_out(size, layer)
                macs = (
                    out[0] * out[1] * layer.out_channels
                    * layer.in_channels * layer.kernel_size[0] * layer.kernel_size[1]
                )
                detail.append((f"backbone.block{i}.conv", macs))
                size = out
                channels = layer.out_channels
            elif isinstance(layer, nn.BatchNorm2d):
                detail.append((f"backbone.block{i}.bn", size[0] * size[1] * channels))
    return detail, size, backbone.out_channels


def _params(module):
    return sum(p.numel() for p in module.parameters())


def complexity_report(model, feature_tag, image_shape):
    """{'feature', 'parameters', 'multiply_adds', 'detail'} for one tag path."""
    model.require_branch(feature_tag)
    detail, (h, w), c = _backbone_pass(model.backbone, image_shape)
    params = _params(model.backbone)
    k = model.num_groups

    detail.append(("global_pool", h * w * c))
    if feature_tag in ("P", "V", "F", "E"):
        detail.append(("part_pool", k * h * w * c))
    if feature_tag in ("F", "E"):
        detail.append(("attention_logits", h * w * c))
        detail.append(("attentive_pool", h * w * c))
    if feature_tag in ("P", "V"):
        # per-part linear (c -> c/K) plus its batch norm
        detail.append(("part_projection", k * (c * (c // k)) + c))
        params += _params(model.projection)

    head = {"G": "head_g", "E": "head_e", "V": "head_v"}.get(feature_tag)
    if head is not None:
        module = getattr(model, head)
        detail.append((f"{head}.bn", c))
        detail.append((f"{head}.classifier", c * module.classifier.out_features))
        params += _params(module)

    return {
        "feature": feature_tag,
        "parameters": int(params),
        "multiply_adds": int(sum(m for _, m in detail)),
        "detail": detail,
    }
