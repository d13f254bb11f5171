"""Training loop: PK batch sampling, staircase schedule, checkpoints, logging.

Mini-batches hold P identities with S samples each (batch-hard mining needs
that structure). The learning rate starts at the configured base and decays
by the configured factor at each milestone epoch. The whole trajectory is a
pure function of (config, dataset, seed).
"""

import csv
import json
import os

import numpy as np
import torch

from .checkpoint import restore_optimizer, save_checkpoint
from .config import ExperimentConfig
from .data.dataset import joints_to_heatmap_grid
from .data.synthetic import augment_with_joints
from .errors import DataError, NumericError
from .heatmaps import build_heatmap_stack, synthesize_heatmaps
from .losses import total_loss
from .models.network import build_model


class PKSampler:
    """Epoch-level P x S batch sampler without replacement.

    Every epoch each identity's samples are shuffled and chunked into groups
    of S; batches draw P chunks of distinct identities until fewer than P
    identities have chunks left. No sample appears twice in one epoch.
    """

    def __init__(self, labels, p, s, rng):
        self.p = p
        self.s = s
        self.rng = rng
        self.by_id = {}
        for idx, label in enumerate(np.asarray(labels)):
            self.by_id.setdefault(int(label), []).append(idx)
        eligible = [i for i, v in self.by_id.items() if len(v) >= s]
        if len(eligible) < p:
            raise DataError(
                f"PK sampling needs >= {p} identities with >= {s} samples; "
                f"found {len(eligible)}"
            )

    def epoch_batches(self):
        chunks = {}
        for ident, indices in self.by_id.items():
            order = np.array(indices)
            self.rng.shuffle(order)
            n_chunks = len(order) // self.s
            if n_chunks:
                chunks[ident] = [
                    order[i * self.s : (i + 1) * self.s] for i in range(n_chunks)
                ]
        batches = []
        while True:
            alive = sorted(i for i, c in chunks.items() if c)
            if len(alive) < self.p:
                break
            picked = self.rng.choice(len(alive), size=self.p, replace=False)
            batch = []
            for j in sorted(picked):
                batch.append(chunks[alive[j]].pop())
            batches.append(np.concatenate(batch))
        return batches


def lr_schedule(epoch, cfg):
    """Base learning rate decayed by gamma at each passed milestone."""
    passed = sum(1 for m in cfg.milestones if epoch >= m)
    return cfg.lr * cfg.gamma ** passed


class Trainer:
    """Single-writer optimization loop over a synthetic dataset."""

    LOG_FIELDS = ("step", "reid_g", "reid_e", "reid_v", "cl", "mcl", "total")

    def __init__(self, dataset, config: ExperimentConfig, out_dir=None):
        config.validate()
        self.dataset = dataset
        self.config = config
        self.out_dir = out_dir
        if out_dir:
            os.makedirs(out_dir, exist_ok=True)

        train_cfg = config.train
        torch.manual_seed(train_cfg.seed)
        self.sampler_rng = np.random.default_rng((train_cfg.seed, 0x5A11))
        self.augment_rng = np.random.default_rng((train_cfg.seed, 0xA06))

        split = dataset.split("train")
        self.label_map = {int(l): i for i, l in enumerate(sorted(set(split.labels.tolist())))}
        self.labels = np.array([self.label_map[int(l)] for l in split.labels])

        self.model = build_model(
            num_ids=len(self.label_map),
            model_cfg=config.model,
            sab=train_cfg.sab,
            feb=train_cfg.feb,
        )
        expected = self.model.backbone.feature_shape(dataset.image_shape)
        if tuple(dataset.heatmap_shape) != expected and (train_cfg.sab or train_cfg.feb):
            raise DataError(
                f"dataset heatmap grid {dataset.heatmap_shape} does not match the "
                f"backbone feature map {expected}"
            )
        self.heatmap_sigma = float(dataset.meta.get("heatmap_sigma", 0.6))
        self.optimizer = torch.optim.Adam(self.model.parameters(), lr=train_cfg.lr)
        self.sampler = PKSampler(self.labels, train_cfg.p, train_cfg.s, self.sampler_rng)
        self.global_step = 0
        self.history = []

    @property
    def needs_heatmaps(self):
        return self.model.sab or self.model.feb

    def make_batch(self, indices, train_mode=True):
        """Gather + augment one batch; returns (images, heatmaps|None, labels).

        Augmentation transforms the ground-truth joints along with the image
        and heatmaps are re-synthesized from the augmented geometry, the way
        an estimator run on the augmented image would produce them.
        """
        split = self.dataset.split("train")
        cfg = self.config.train
        images, stacks = [], []
        for idx in indices:
            img = split.images[idx]
            if train_mode:
                img, joints = augment_with_joints(
                    img,
                    split.joints[idx],
                    self.augment_rng,
                    flip_prob=cfg.flip_prob,
                    crop_prob=cfg.crop_prob,
                    erase_prob=cfg.erase_prob,
                )
                if self.needs_heatmaps:
                    grid = joints_to_heatmap_grid(
                        joints, self.dataset.image_shape, self.dataset.heatmap_shape
                    )
                    raw = synthesize_heatmaps(
                        grid, self.heatmap_sigma, self.dataset.heatmap_shape
                    )
                    stacks.append(build_heatmap_stack(raw).astype(np.float32))
            images.append(img)
        if not train_mode and self.needs_heatmaps:
            stacks = list(self.dataset.heatmap_batch("train", indices))
        image_t = torch.from_numpy(
            np.stack(images).transpose(0, 3, 1, 2).astype(np.float32)
        )
        heatmap_t = torch.from_numpy(np.stack(stacks)) if stacks else None
        label_t = torch.from_numpy(self.labels[indices].astype(np.int64))
        return image_t, heatmap_t, label_t

    def train_step(self, batch):
        """One optimization step; returns the per-term loss breakdown."""
        images, heatmaps, labels = batch
        self.model.train()
        bundle = self.model(images, heatmaps)
        total, breakdown = total_loss(self.model, bundle, labels, self.config.train)
        if not torch.isfinite(total):
            self._dump_diagnostics(breakdown)
            raise NumericError(
                f"non-finite loss at step {self.global_step}: "
                + ", ".join(f"{k}={float(v.detach()):.4g}" for k, v in breakdown.items())
            )
        self.optimizer.zero_grad()
        total.backward()
        self.optimizer.step()
        self.global_step += 1
        row = {"step": self.global_step}
        row.update({k: float(v.detach()) for k, v in breakdown.items()})
        return row

    def _dump_diagnostics(self, breakdown):
        if not self.out_dir:
            return
        path = os.path.join(self.out_dir, "abort_diagnostics.json")
        with open(path, "w") as fh:
            json.dump(
                {
                    "step": self.global_step,
                    "losses": {k: float(v.detach()) for k, v in breakdown.items()},
                    "lr": self.optimizer.param_groups[0]["lr"],
                },
                fh,
                indent=1,
            )

    def set_lr(self, lr):
        for group in self.optimizer.param_groups:
            group["lr"] = lr

    def train(self):
        """Run the configured number of epochs; returns the loss history."""
        cfg = self.config.train
        log_fh = writer = None
        if self.out_dir:
            log_fh = open(os.path.join(self.out_dir, "training_log.csv"), "w", newline="")
            writer = csv.DictWriter(log_fh, fieldnames=self.LOG_FIELDS)
            writer.writeheader()
        try:
            for epoch in range(cfg.epochs):
                self.set_lr(lr_schedule(epoch, cfg))
                for indices in self.sampler.epoch_batches():
                    row = self.train_step(self.make_batch(indices))
                    self.history.append(row)
                    if writer and self.global_step % cfg.log_every == 0:
                        writer.writerow({k: row[k] for k in self.LOG_FIELDS})
                if log_fh:
                    log_fh.flush()
                if self.out_dir and cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0:
                    self.save(os.path.join(self.out_dir, f"checkpoint_epoch{epoch + 1:03d}.pgck"), epoch + 1)
            if self.out_dir:
                self.save(os.path.join(self.out_dir, "checkpoint_final.pgck"), cfg.epochs)
        finally:
            if log_fh:
                log_fh.close()
        return self.history

    def save(self, path, epoch):
        meta = {
            "epoch": epoch,
            "seed": self.config.train.seed,
            "switches": {
                "sab": self.config.train.sab,
                "feb": self.config.train.feb,
                "interaction": self.config.train.interaction,
                "mcl": self.config.train.mcl,
                "cl": self.config.train.cl,
            },
            "mb_only": False,
        }
        save_checkpoint(path, self.model, self.optimizer, meta)
        return path

    def restore(self, ckpt):
        """Load model + optimizer state from a parsed checkpoint."""
        from .checkpoint import restore_model

        model, data = restore_model(ckpt)
        self.model = model
        self.optimizer = torch.optim.Adam(self.model.parameters(), lr=self.config.train.lr)
        restore_optimizer(data, self.model, self.optimizer)
        return self
