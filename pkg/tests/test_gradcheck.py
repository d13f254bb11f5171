import math

import pytest
import torch

from posedistill.gradcheck import (
    check_stop_gradients,
    finite_difference_loss_checks,
    make_toy_setup,
    relative_error,
    run_all_checks,
    verify_fusion_gradients,
)
from posedistill.losses import softmax_triplet


def test_fusion_gradient_identity_exact():
    for seed in range(5):
        model, images, heatmaps, labels = make_toy_setup(seed)
        report = verify_fusion_gradients(model, (images, heatmaps, labels), fd_seed=seed)
        assert report["max_fusion_gradient_diff"] == 0.0
        assert report["offending_indices"] == []
        assert report["triplet_fd_rel_error"] < 1e-4
        assert report["passed"]


def test_fusion_identity_holds_for_degenerate_zero_features():
    model, images, heatmaps, labels = make_toy_setup(99)
    with torch.no_grad():
        for block in model.backbone.blocks:
            block[0].weight.zero_()  # forces f_G = f_P = 0
    report = verify_fusion_gradients(model, (images, heatmaps, labels))
    assert report["max_fusion_gradient_diff"] == 0.0


def test_softmax_triplet_fd_on_axis_vectors():
    v_a = torch.tensor([1.0, 0.0], dtype=torch.float64, requires_grad=True)
    v_p = torch.tensor([1.0, 0.0], dtype=torch.float64)
    v_n = torch.tensor([0.0, 1.0], dtype=torch.float64)
    loss = softmax_triplet(v_a, v_p, v_n)
    (grad,) = torch.autograd.grad(loss, v_a)
    # analytic: sigmoid(a.n - a.p) * (n - p)
    sig = 1.0 / (1.0 + math.exp(1.0))
    assert grad[0].item() == pytest.approx(-sig, rel=1e-9)
    assert grad[1].item() == pytest.approx(sig, rel=1e-9)

    h = 1e-6
    for i in range(2):
        up, down = v_a.detach().clone(), v_a.detach().clone()
        up[i] += h
        down[i] -= h
        fd = (softmax_triplet(up, v_p, v_n) - softmax_triplet(down, v_p, v_n)).item() / (2 * h)
        assert relative_error(fd, grad[i].item()) < 1e-4


def test_finite_difference_all_loss_terms():
    reports = finite_difference_loss_checks(seed=0)
    names = {r["loss"] for r in reports}
    assert names == {"id_g", "triplet_g", "reid_e", "reid_v", "consistent", "mcl"}
    for report in reports:
        assert report["passed"], report


def test_stop_gradient_contracts_hold():
    model, images, heatmaps, labels = make_toy_setup(3)
    report = check_stop_gradients(model, (images, heatmaps, labels))
    assert report["cl_teacher_grad_leak"] == 0.0
    assert report["mcl_projection_grad_leak"] == 0.0
    assert report["passed"]


def test_stop_gradient_fault_injection_detected():
    model, images, heatmaps, labels = make_toy_setup(4)
    report = check_stop_gradients(model, (images, heatmaps, labels), break_detach=True)
    assert report["cl_teacher_grad_leak"] > 0.0
    assert report["mcl_projection_grad_leak"] > 0.0
    assert not report["passed"]


def test_run_all_checks_aggregate():
    report = run_all_checks(seed=0, num_fusion_models=2)
    assert report["passed"]
    broken = run_all_checks(seed=0, break_detach=True, num_fusion_models=1)
    assert not broken["passed"]
