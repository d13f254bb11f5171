import json
import os

import numpy as np
import pytest

from posedistill.checkpoint import load_checkpoint
from posedistill.cli import main
from posedistill.data.dataset import manifest_checksum

SMALL = [
    "-o", "data.num_ids=4", "-o", "data.images_per_id=8",
    "-o", "data.test_num_ids=2", "-o", "data.query_per_id=4",
    "-o", "data.gallery_per_id=8", "-o", "data.num_cameras=3",
    "-o", "model.channels=16", "-o", "model.base_width=8",
    "-o", "train.p=2", "-o", "train.s=2",
    "-o", "train.epochs=2", "-o", "train.milestones=[1]",
]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    data_dir = str(root / "data")
    assert main(["gen-data", "--out", data_dir, "--seed", "9", *SMALL]) == 0

    train_dir = str(root / "run_full")
    assert main([
        "train", "--dataset", data_dir, "--out", train_dir,
        "--seed", "9", "--ablation", "full", *SMALL,
    ]) == 0
    return {"root": root, "data": data_dir, "train": train_dir}


def test_gen_data_layout_and_composition(workspace):
    data_dir = workspace["data"]
    assert os.path.isfile(os.path.join(data_dir, "meta.json"))
    assert os.path.isfile(os.path.join(data_dir, "resolved_config.cfg"))
    assert os.path.isfile(os.path.join(data_dir, "train.pghm"))
    with open(os.path.join(data_dir, "meta.json")) as fh:
        meta = json.load(fh)
    for split, n_per_id in (("train", 8), ("query", 4), ("gallery", 8)):
        records = meta["splits"][split]
        by_id = {}
        for rec in records:
            by_id.setdefault(rec["label"], []).append(rec["kind"])
        for kinds in by_id.values():
            assert kinds.count("holistic") == n_per_id // 2
            assert kinds.count("half") == n_per_id // 4
            assert kinds.count("third") == n_per_id // 4


def test_gen_data_refuses_nonempty_without_force(workspace):
    assert main(["gen-data", "--out", workspace["data"], "--seed", "9", *SMALL]) == 2
    assert main([
        "gen-data", "--out", workspace["data"], "--seed", "9", "--force", *SMALL,
    ]) == 0


def test_gen_data_reproducible_checksum(workspace, tmp_path):
    other = str(tmp_path / "data2")
    assert main(["gen-data", "--out", other, "--seed", "9", *SMALL]) == 0
    assert manifest_checksum(other) == manifest_checksum(workspace["data"])


def test_train_writes_log_and_checkpoint(workspace):
    train_dir = workspace["train"]
    assert os.path.isfile(os.path.join(train_dir, "checkpoint_final.pgck"))
    log = open(os.path.join(train_dir, "training_log.csv")).read().splitlines()
    assert log[0] == "step,reid_g,reid_e,reid_v,cl,mcl,total"
    first = dict(zip(log[0].split(","), map(float, log[1].split(","))))
    for column in ("reid_g", "reid_e", "reid_v", "cl", "mcl"):
        assert first[column] > 0.0


def test_train_baseline_zeroes_branch_columns(workspace, tmp_path):
    out = str(tmp_path / "run_base")
    assert main([
        "train", "--dataset", workspace["data"], "--out", out,
        "--seed", "9", "--ablation", "baseline", *SMALL,
    ]) == 0
    log = open(os.path.join(out, "training_log.csv")).read().splitlines()
    row = dict(zip(log[0].split(","), map(float, log[1].split(","))))
    assert row["reid_e"] == row["reid_v"] == row["cl"] == row["mcl"] == 0.0
    assert row["total"] == row["reid_g"]


def test_train_missing_dataset_is_data_error(tmp_path):
    assert main([
        "train", "--dataset", str(tmp_path / "nope"), "--out", str(tmp_path / "o"),
    ]) == 3


def test_eval_and_mb_only_capability(workspace, tmp_path):
    ckpt = os.path.join(workspace["train"], "checkpoint_final.pgck")
    out = str(tmp_path / "eval_g")
    assert main([
        "eval", "--checkpoint", ckpt, "--dataset", workspace["data"],
        "--out", out, "--feature", "G", *SMALL,
    ]) == 0
    assert os.path.isfile(os.path.join(out, "ranking_report.json"))
    assert os.path.isfile(os.path.join(out, "ranking_summary.csv"))
    assert os.path.isfile(os.path.join(out, "query_G.pgft"))

    # strip to the main branch, then pose features must fail with a capability error
    mb = str(tmp_path / "mb.pgck")
    assert main(["export", "--checkpoint", ckpt, "--out", mb]) == 0
    assert main([
        "eval", "--checkpoint", mb, "--dataset", workspace["data"],
        "--out", str(tmp_path / "eval_mb_g"), "--feature", "G", *SMALL,
    ]) == 0
    assert main([
        "eval", "--checkpoint", mb, "--dataset", workspace["data"],
        "--out", str(tmp_path / "eval_mb_v"), "--feature", "V", *SMALL,
    ]) == 4

    full = load_checkpoint(ckpt)
    stripped = load_checkpoint(mb)
    assert stripped.parameter_count() < full.parameter_count()


def test_eval_export_flag_writes_stripped_checkpoint(workspace, tmp_path):
    ckpt = os.path.join(workspace["train"], "checkpoint_final.pgck")
    out = str(tmp_path / "eval_export")
    assert main([
        "eval", "--checkpoint", ckpt, "--dataset", workspace["data"],
        "--out", out, "--feature", "V", "--export-mb-only", *SMALL,
    ]) == 0
    assert os.path.isfile(os.path.join(out, "mb_only.pgck"))
    with open(os.path.join(out, "ranking_report.json")) as fh:
        report = json.load(fh)
    assert report["feature_used"] == "G"  # forced by the export flag


def test_gradcheck_exit_codes(tmp_path):
    out = str(tmp_path / "gc")
    assert main(["gradcheck", "--seed", "0", "--models", "2", "--out", out]) == 0
    with open(os.path.join(out, "gradcheck_report.json")) as fh:
        report = json.load(fh)
    assert report["passed"] is True
    assert max(r["max_fusion_gradient_diff"] for r in report["fusion"]) == 0.0
    assert main(["gradcheck", "--seed", "0", "--models", "1", "--break-detach"]) == 5


def test_dump_responses_grid_shapes(workspace, tmp_path):
    ckpt = os.path.join(workspace["train"], "checkpoint_final.pgck")
    out = str(tmp_path / "dumps")
    assert main([
        "dump-responses", "--checkpoint", ckpt, "--dataset", workspace["data"],
        "--split", "query", "--indices", "0,1", "--out", out,
    ]) == 0
    files = sorted(os.listdir(out))
    responses = [f for f in files if f.endswith("_response.csv")]
    attentions = [f for f in files if f.endswith("_attention.csv")]
    assert len(responses) == 2 and len(attentions) == 2
    grid = np.loadtxt(os.path.join(out, responses[0]), delimiter=",")
    assert grid.shape == (4, 2)  # feature-map spatial dims at 64x32, 4 blocks


def test_bad_override_is_config_error(tmp_path):
    assert main([
        "gen-data", "--out", str(tmp_path / "x"), "-o", "data.bogus=1",
    ]) == 2
