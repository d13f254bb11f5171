"""Command-line entry point.

Commands: gen-data, train, eval, gradcheck, dump-responses, export.
Every run writes a resolved-config snapshot into its output directory.
Exit codes: 0 success, 2 configuration error, 3 data error, 4 capability
error, 5 check failure, 6 integrity error, 7 numeric error.
"""

import argparse
import csv
import json
import os
import sys

import numpy as np
import torch

from .checkpoint import export_mb_only, load_checkpoint, restore_model
from .config import (
    ABLATIONS,
    ExperimentConfig,
    apply_overrides,
    dump_config,
    load_config_file,
)
from .data.dataset import SyntheticDataset, build_partial_duke_split, manifest_checksum
from .errors import (
    CapabilityError,
    CheckFailure,
    ConfigurationError,
    DataError,
    EvaluationError,
    IntegrityError,
    NumericError,
    PoseDistillError,
)
from .evaluation import distance_matrix, evaluate_ranking, extract_features, write_pgft
from .gradcheck import run_all_checks
from .models.backbone import feature_map_shape
from .trainer import Trainer

EXIT_CODES = (
    (ConfigurationError, 2),
    (EvaluationError, 3),
    (DataError, 3),
    (CapabilityError, 4),
    (CheckFailure, 5),
    (IntegrityError, 6),
    (NumericError, 7),
)


def _build_config(args):
    cfg = ExperimentConfig()
    if getattr(args, "config", None):
        cfg = load_config_file(args.config, cfg)
    if getattr(args, "ablation", None):
        cfg.apply_ablation(args.ablation)
    apply_overrides(cfg, getattr(args, "override", None))
    if getattr(args, "seed", None) is not None:
        cfg.data.seed = args.seed
        cfg.train.seed = args.seed
    cfg.validate()
    return cfg


def _snapshot(cfg, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    dump_config(cfg, os.path.join(out_dir, "resolved_config.cfg"))


def cmd_gen_data(args):
    cfg = _build_config(args)
    out = args.out
    if os.path.isdir(out) and os.listdir(out) and not args.force:
        raise ConfigurationError(
            f"output directory {out!r} is not empty (use --force to overwrite)"
        )
    heatmap_shape = feature_map_shape(
        (cfg.data.image_height, cfg.data.image_width), cfg.model.blocks
    )
    dataset = build_partial_duke_split(cfg.data, heatmap_shape)
    dataset.save(out)
    _snapshot(cfg, out)
    print(f"dataset written to {out} (manifest sha256 {manifest_checksum(out)})")
    return 0


def cmd_train(args):
    cfg = _build_config(args)
    if not os.path.isdir(args.dataset):
        raise DataError(f"dataset directory {args.dataset!r} does not exist")
    dataset = SyntheticDataset.load(args.dataset)
    _snapshot(cfg, args.out)
    trainer = Trainer(dataset, cfg, out_dir=args.out)
    trainer.train()
    final = os.path.join(args.out, "checkpoint_final.pgck")
    print(f"training complete; final checkpoint at {final}")
    return 0


def cmd_eval(args):
    cfg = _build_config(args)
    if args.feature:
        cfg.eval.feature = args.feature
    _snapshot(cfg, args.out)

    checkpoint_path = args.checkpoint
    if args.export_mb_only:
        checkpoint_path = os.path.join(args.out, "mb_only.pgck")
        export_mb_only(args.checkpoint, checkpoint_path)
        cfg.eval.feature = "G"
    model, _ = restore_model(checkpoint_path)
    dataset = SyntheticDataset.load(args.dataset)

    tag = cfg.eval.feature
    q_feat, q_ids, q_cams = extract_features(model, dataset, "query", tag)
    g_feat, g_ids, g_cams = extract_features(model, dataset, "gallery", tag)
    dist = distance_matrix(q_feat, g_feat, cfg.eval.metric)
    report = evaluate_ranking(
        dist, q_ids, q_cams, g_ids, g_cams, ranks=cfg.eval.ranks, feature_used=tag
    )
    report.save(
        os.path.join(args.out, "ranking_report.json"),
        os.path.join(args.out, "ranking_summary.csv"),
    )
    write_pgft(os.path.join(args.out, f"query_{tag}.pgft"), q_feat, q_ids, q_cams)
    write_pgft(os.path.join(args.out, f"gallery_{tag}.pgft"), g_feat, g_ids, g_cams)
    cmc_text = " ".join(f"R{k}={v:.4f}" for k, v in sorted(report.cmc.items()))
    print(f"feature {tag}: {cmc_text} mAP={report.map:.4f} "
          f"({report.num_valid_queries} valid / {report.num_skipped_queries} skipped)")
    return 0


def cmd_export(args):
    export_mb_only(args.checkpoint, args.out)
    ckpt = load_checkpoint(args.out)
    print(
        f"main-branch export written to {args.out} "
        f"({ckpt.parameter_count()} learnable parameters)"
    )
    return 0


def cmd_gradcheck(args):
    report = run_all_checks(
        seed=args.seed if args.seed is not None else 0,
        break_detach=args.break_detach,
        num_fusion_models=args.models,
    )
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "gradcheck_report.json"), "w") as fh:
            json.dump(report, fh, indent=1)
    max_fusion = max(r["max_fusion_gradient_diff"] for r in report["fusion"])
    fd_worst = max(r["max_rel_error"] for r in report["finite_difference"])
    print(f"fusion-gradient identity: max discrepancy {max_fusion:.1e} over "
          f"{len(report['fusion'])} models")
    print(f"softmax-triplet finite differences: worst rel error "
          f"{max(r['triplet_fd_rel_error'] for r in report['fusion']):.2e}")
    print(f"loss-term finite differences: worst rel error {fd_worst:.2e}")
    stop = report["stop_gradient"]
    print(f"stop-gradient leaks: consistent={stop['cl_teacher_grad_leak']:.1e} "
          f"contrastive={stop['mcl_projection_grad_leak']:.1e}")
    if not report["passed"]:
        raise CheckFailure("one or more gradient checks failed")
    print("all gradient checks passed")
    return 0


def cmd_dump_responses(args):
    model, _ = restore_model(args.checkpoint)
    dataset = SyntheticDataset.load(args.dataset)
    split = dataset.split(args.split)
    indices = (
        [int(i) for i in args.indices.split(",")]
        if args.indices
        else list(range(min(4, len(split))))
    )
    os.makedirs(args.out, exist_ok=True)
    model.eval()
    with torch.no_grad():
        images = torch.from_numpy(
            split.images[indices].transpose(0, 3, 1, 2).copy()
        )
        heatmaps = None
        if model.feb or model.sab:
            heatmaps = torch.from_numpy(
                dataset.heatmap_batch(args.split, np.asarray(indices))
            )
        bundle = model(images, heatmaps)
    for row, idx in enumerate(indices):
        image_id = split.image_ids[idx]
        response = bundle.feature_map[row].mean(dim=0).numpy()
        _write_grid(os.path.join(args.out, f"{image_id}_response.csv"), response)
        if bundle.attention is not None:
            _write_grid(
                os.path.join(args.out, f"{image_id}_attention.csv"),
                bundle.attention[row].numpy(),
            )
    print(f"wrote response maps for {len(indices)} images to {args.out}")
    return 0


def _write_grid(path, grid):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in np.asarray(grid):
            writer.writerow([f"{v:.8g}" for v in row])


def build_parser():
    parser = argparse.ArgumentParser(
        prog="posedistill",
        description="Pose-guided feature learning with knowledge distillation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--config", help="flat-key config file")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument(
            "-o", "--override", action="append", default=[],
            metavar="KEY=VALUE", help="config override (repeatable)",
        )

    p = sub.add_parser("gen-data", help="generate a synthetic dataset")
    common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true", help="overwrite non-empty target")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a model on a generated dataset")
    common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--ablation", choices=sorted(ABLATIONS))
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on query/gallery")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--feature", choices=["G", "P", "V", "F", "E"])
    p.add_argument(
        "--export-mb-only", action="store_true",
        help="strip to the main branch first, then evaluate with feature G",
    )
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export", help="write a main-branch-only checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("gradcheck", help="run the gradient verification harness")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="directory for the JSON report")
    p.add_argument("--models", type=int, default=5, help="random models per check")
    p.add_argument("--break-detach", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("dump-responses", help="dump feature/attention maps as CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", default="query")
    p.add_argument("--indices", help="comma-separated sample indices")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dump_responses)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PoseDistillError as exc:
        print(f"error: {exc}", file=sys.stderr)
        for klass, code in EXIT_CODES:
            if isinstance(exc, klass):
                return code
        return 1


if __name__ == "__main__":
    sys.exit(main())
