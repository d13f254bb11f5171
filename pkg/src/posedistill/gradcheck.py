"""Verification harness for gradient identities and stop-gradient contracts.

Covers three families of checks:
  * fusion-gradient identity: under any loss on the fused feature, the
    gradients w.r.t. the global and the part-aligned feature are the same
    tensor, element-wise exactly;
  * finite differences: autodiff gradients of every loss term match central
    differences on a tiny double-precision model;
  * stop-gradient contracts: the distillation losses leak no gradient into
    their teacher paths (foreground subgraph / part projections). A fault
    hook (break_detach) removes the detach so the checks must fail.
"""

import numpy as np
import torch

from .errors import CheckFailure
from .losses import id_loss, softmax_triplet, triplet_batch_hard
from .models.feb import consistent_loss
from .models.network import PoseDistillNet
from .models.sab import multi_part_contrastive_loss, split_global

FD_STEP = 1e-6
FD_TOLERANCE = 1e-4


def make_toy_setup(seed, channels=16, blocks=2, num_ids=2, p=2, s=2,
                   image_shape=(16, 8), dtype=torch.float64):
    """Small random model + consistent batch for verification runs."""
    torch.manual_seed(seed)
    model = PoseDistillNet(
        num_ids=num_ids, channels=channels, blocks=blocks,
        base_width=min(8, channels), num_groups=8,
    ).to(dtype)
    model.eval()  # frozen batch-norm statistics: loss is a pure function of params
    n = p * s
    gen = torch.Generator().manual_seed(seed + 1)
    images = torch.rand((n, 3) + image_shape, generator=gen, dtype=dtype)
    fh, fw = model.backbone.feature_shape(image_shape)
    raw = torch.rand((n, 8, fh, fw), generator=gen, dtype=dtype)
    heatmaps = raw / raw.sum(dim=(2, 3), keepdim=True)
    labels = torch.arange(p).repeat_interleave(s)
    return model, images, heatmaps, labels


def relative_error(a, b, floor=1e-8):
    """Normwise relative error: max|a-b| / max(scale of a, scale of b).

    Normwise (not per-element) so that elements sitting at the roundoff
    floor of central differences do not dominate the comparison.
    """
    a = np.atleast_1d(np.asarray(a, dtype=np.float64))
    b = np.atleast_1d(np.asarray(b, dtype=np.float64))
    scale = max(np.abs(a).max(), np.abs(b).max(), floor)
    return float(np.abs(a - b).max() / scale)


def verify_fusion_gradients(model, batch, fd_seed=0):
    """Check the fused-loss gradient identity and the softmax-triplet gradient.

    (a) gradients of the ReID loss on the fused feature w.r.t. the global
    and part features must differ by exactly zero; (b) the autodiff gradient
    of the softmax-form triplet w.r.t. the anchor must match central finite
    differences within FD_TOLERANCE in double precision.
    """
    images, heatmaps, labels = batch
    model.eval()
    bundle = model(images, heatmaps)
    loss = id_loss(bundle.f_v, labels, model.head_v) + triplet_batch_hard(
        bundle.f_v, labels
    )
    grad_g, grad_p = torch.autograd.grad(loss, [bundle.f_g, bundle.f_p])
    diff = (grad_g - grad_p).abs()
    max_diff = float(diff.max())
    offending = (
        [tuple(int(x) for x in idx) for idx in torch.nonzero(diff)] if max_diff > 0 else []
    )

    gen = torch.Generator().manual_seed(fd_seed)
    dim = bundle.f_g.shape[1]
    v_a = torch.randn(dim, generator=gen, dtype=torch.float64, requires_grad=True)
    v_p = torch.randn(dim, generator=gen, dtype=torch.float64)
    v_n = torch.randn(dim, generator=gen, dtype=torch.float64)
    loss_tri = softmax_triplet(v_a, v_p, v_n)
    (auto_grad,) = torch.autograd.grad(loss_tri, v_a)
    fd = torch.zeros_like(auto_grad)
    with torch.no_grad():
        for i in range(dim):
            va = v_a.detach().clone()
            va[i] += FD_STEP
            up = softmax_triplet(va, v_p, v_n)
            va[i] -= 2 * FD_STEP
            down = softmax_triplet(va, v_p, v_n)
            fd[i] = (up - down) / (2 * FD_STEP)
    rel = relative_error(auto_grad.numpy(), fd.numpy())

    return {
        "max_fusion_gradient_diff": max_diff,
        "offending_indices": offending,
        "triplet_fd_rel_error": rel,
        "passed": max_diff == 0.0 and rel < FD_TOLERANCE,
    }


def _loss_closures(model, labels, frozen_teachers):
    """Loss terms as functions of the parameters.

    The distillation losses block their teacher path, so for finite
    differences the teacher features stay frozen at the unperturbed forward
    (otherwise fd would measure the total derivative the stop-gradient
    deliberately removes).
    """
    margin = 0.3
    f_e_teacher, f_pk_teacher = frozen_teachers
    return {
        "id_g": lambda b: id_loss(b.f_g, labels, model.head_g),
        "triplet_g": lambda b: triplet_batch_hard(b.f_g, labels, margin),
        "reid_e": lambda b: id_loss(b.f_e, labels, model.head_e)
        + triplet_batch_hard(b.f_e, labels, margin),
        "reid_v": lambda b: id_loss(b.f_v, labels, model.head_v)
        + triplet_batch_hard(b.f_v, labels, margin),
        "consistent": lambda b: consistent_loss(b.f_g, f_e_teacher),
        "mcl": lambda b: multi_part_contrastive_loss(
            split_global(b.f_g, model.num_groups),
            f_pk_teacher,
            symmetry=model.symmetry,
            temperature=model.mcl_temperature,
            normalize=model.mcl_normalize,
        ),
    }


def finite_difference_loss_checks(seed=0):
    """Central-difference check of every loss term on a tiny (<=500 param) model."""
    model, images, heatmaps, labels = make_toy_setup(
        seed, channels=8, blocks=1, image_shape=(16, 8)
    )
    n_params = sum(p.numel() for p in model.parameters())
    assert n_params <= 500, f"tiny verification model has {n_params} parameters"

    with torch.no_grad():
        base = model(images, heatmaps)
    closures = _loss_closures(model, labels, (base.f_e.clone(), base.f_pk.clone()))
    params = [p for p in model.parameters() if p.requires_grad]

    auto = {}
    for name, closure in closures.items():
        loss = closure(model(images, heatmaps))
        grads = torch.autograd.grad(loss, params, allow_unused=True)
        auto[name] = [
            torch.zeros_like(p) if g is None else g for p, g in zip(params, grads)
        ]

    def all_losses():
        bundle = model(images, heatmaps)
        return {name: float(c(bundle)) for name, c in closures.items()}

    fd = {name: [torch.zeros_like(p) for p in params] for name in closures}
    with torch.no_grad():
        for pi, param in enumerate(params):
            flat = param.view(-1)
            for j in range(flat.numel()):
                orig = float(flat[j])
                flat[j] = orig + FD_STEP
                up = all_losses()
                flat[j] = orig - FD_STEP
                down = all_losses()
                flat[j] = orig
                for name in closures:
                    fd[name][pi].view(-1)[j] = (up[name] - down[name]) / (2 * FD_STEP)

    reports = []
    for name in closures:
        # one normwise comparison over the whole gradient vector dL/dtheta
        auto_flat = np.concatenate([g.numpy().ravel() for g in auto[name]])
        fd_flat = np.concatenate([g.numpy().ravel() for g in fd[name]])
        rel = relative_error(auto_flat, fd_flat)
        reports.append(
            {"loss": name, "max_rel_error": rel, "passed": rel < FD_TOLERANCE}
        )
    return reports


def check_stop_gradients(model, batch, break_detach=False):
    """Verify the two teacher paths receive exactly zero gradient.

    The consistent loss is probed at the foreground feature (the only
    foreground-branch tensor that could leak; the branch has no parameters
    of its own) plus all FEB-tagged parameters; the contrastive loss is
    probed at the part-projection parameters. break_detach removes the
    stop-gradient so both probes must light up.
    """
    images, heatmaps, labels = batch
    model.eval()
    bundle = model(images, heatmaps)

    teacher_e = bundle.f_e if break_detach else bundle.f_e.detach()
    l_cl = consistent_loss(bundle.f_g, teacher_e, require_detached=not break_detach)
    feb_params = [
        p
        for n, p in model.named_parameters()
        if model.branch_of(n) == "feb" and p.requires_grad
    ]
    grads = torch.autograd.grad(
        l_cl, [bundle.f_f] + feb_params, allow_unused=True, retain_graph=True
    )
    cl_leak = max(
        (float(g.abs().max()) for g in grads if g is not None), default=0.0
    )

    teacher_pk = bundle.f_pk if break_detach else bundle.f_pk.detach()
    l_mcl = multi_part_contrastive_loss(
        split_global(bundle.f_g, model.num_groups),
        teacher_pk,
        symmetry=model.symmetry,
        temperature=model.mcl_temperature,
        normalize=model.mcl_normalize,
        require_detached=not break_detach,
    )
    proj_params = [p for p in model.projection.parameters() if p.requires_grad]
    grads = torch.autograd.grad(l_mcl, proj_params, allow_unused=True)
    mcl_leak = max(
        (float(g.abs().max()) for g in grads if g is not None), default=0.0
    )

    return {
        "cl_teacher_grad_leak": cl_leak,
        "mcl_projection_grad_leak": mcl_leak,
        "passed": cl_leak == 0.0 and mcl_leak == 0.0,
    }


def run_all_checks(seed=0, break_detach=False, num_fusion_models=5):
    """Full verification sweep; raises nothing, reports per-check outcomes."""
    fusion = []
    for i in range(num_fusion_models):
        model, images, heatmaps, labels = make_toy_setup(seed + i)
        fusion.append(verify_fusion_gradients(model, (images, heatmaps, labels), fd_seed=seed + i))

    fd_reports = finite_difference_loss_checks(seed)

    model, images, heatmaps, labels = make_toy_setup(seed + 1000)
    stop = check_stop_gradients(model, (images, heatmaps, labels), break_detach)

    passed = (
        all(r["passed"] for r in fusion)
        and all(r["passed"] for r in fd_reports)
        and stop["passed"]
    )
    return {
        "fusion": fusion,
        "finite_difference": fd_reports,
        "stop_gradient": stop,
        "passed": passed,
    }


def require_all_checks(seed=0, break_detach=False):
    report = run_all_checks(seed, break_detach)
    if not report["passed"]:
        raise CheckFailure("gradient verification failed")
    return report
