"""Checkpoint container: named float32 payloads plus a branch-tagged manifest.

File layout: magic ``PGCK``, u32 version, u64 header length, header JSON,
then the raw little-endian float32 payload. The header manifest records
name/shape/branch/offset for every tensor (model state and Adam moments),
integer counters (batch-norm sample counts, optimizer steps) live in the
header itself, and a SHA-256 of the payload guards integrity. Writes are
atomic (temp file + rename), so an interrupted run never corrupts the last
complete checkpoint. The manifest's branch tags support stripping a trained
model down to its pose-free main-branch subset.
"""

import hashlib
import json
import os
import struct
import tempfile

import numpy as np
import torch

from .errors import IntegrityError
from .models.network import PoseDistillNet

MAGIC = b"PGCK"
VERSION = 1

MB_BRANCHES = ("backbone", "mb_head")


def _state_entries(model):
    learnable = {name for name, _ in model.named_parameters()}
    for name, tensor in model.state_dict().items():
        yield name, tensor, name in learnable


def save_checkpoint(path, model, optimizer=None, meta=None):
    """Serialize model (and optionally Adam optimizer) state to one file."""
    payload = bytearray()
    params = []
    counters = {}
    for name, tensor, is_learnable in _state_entries(model):
        if not tensor.is_floating_point():
            counters[name] = int(tensor.item())
            continue
        arr = tensor.detach().cpu().numpy().astype("<f4")
        params.append(
            {
                "name": name,
                "shape": list(arr.shape),
                "branch": model.branch_of(name),
                "learnable": is_learnable,
                "offset": len(payload),
                "size": int(arr.size),
            }
        )
        payload.extend(arr.tobytes())

    opt_header = None
    if optimizer is not None:
        entries, steps = [], {}
        for name, param in model.named_parameters():
            state = optimizer.state.get(param)
            if not state:
                continue
            steps[name] = float(state["step"])
            for kind in ("exp_avg", "exp_avg_sq"):
                arr = state[kind].detach().cpu().numpy().astype("<f4")
                entries.append(
                    {
                        "param": name,
                        "kind": kind,
                        "shape": list(arr.shape),
                        "offset": len(payload),
                        "size": int(arr.size),
                    }
                )
                payload.extend(arr.tobytes())
        opt_header = {
            "entries": entries,
            "steps": steps,
            "lr": float(optimizer.param_groups[0]["lr"]),
        }

    header = {
        "format": "pgck",
        "arch": model.arch_meta(),
        "meta": dict(meta or {}),
        "params": params,
        "counters": counters,
        "optimizer": opt_header,
        "payload_sha256": hashlib.sha256(bytes(payload)).hexdigest(),
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()

    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<IQ", VERSION, len(blob)))
            fh.write(blob)
            fh.write(bytes(payload))
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


class CheckpointData:
    """Parsed checkpoint: header dict + payload accessor."""

    def __init__(self, header, payload):
        self.header = header
        self.payload = payload

    def array(self, entry):
        start = entry["offset"]
        data = self.payload[start : start + 4 * entry["size"]]
        return np.frombuffer(data, dtype="<f4").reshape(entry["shape"]).copy()

    @property
    def arch(self):
        return self.header["arch"]

    @property
    def meta(self):
        return self.header["meta"]

    def parameter_count(self, branches=None, learnable_only=True):
        total = 0
        for entry in self.header["params"]:
            if learnable_only and not entry["learnable"]:
                continue
            if branches is not None and entry["branch"] not in branches:
                continue
            total += entry["size"]
        return total


def load_checkpoint(path):
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise IntegrityError(f"{path}: not a checkpoint file (bad magic)")
        version, blob_len = struct.unpack("<IQ", fh.read(12))
        if version != VERSION:
            raise IntegrityError(f"{path}: unsupported checkpoint version {version}")
        try:
            header = json.loads(fh.read(blob_len))
        except json.JSONDecodeError as exc:
            raise IntegrityError(f"{path}: corrupt checkpoint header") from exc
        payload = fh.read()
    digest = hashlib.sha256(payload).hexdigest()
    if digest != header["payload_sha256"]:
        raise IntegrityError(f"{path}: payload checksum mismatch")
    return CheckpointData(header, payload)


def restore_model(path_or_ckpt):
    """Rebuild the architecture recorded in a checkpoint and load its weights."""
    ckpt = path_or_ckpt
    if not isinstance(ckpt, CheckpointData):
        ckpt = load_checkpoint(ckpt)
    model = PoseDistillNet(**ckpt.arch)

    state = model.state_dict()
    expected_float = {n for n, t in state.items() if t.is_floating_point()}
    expected_int = {n for n, t in state.items() if not t.is_floating_point()}
    got_float = {e["name"] for e in ckpt.header["params"]}
    got_int = set(ckpt.header["counters"])
    if expected_float != got_float or expected_int != got_int:
        missing = (expected_float | expected_int) - (got_float | got_int)
        extra = (got_float | got_int) - (expected_float | expected_int)
        raise IntegrityError(
            f"checkpoint does not match architecture (missing={sorted(missing)}, "
            f"unexpected={sorted(extra)})"
        )

    new_state = {}
    for entry in ckpt.header["params"]:
        tensor = torch.from_numpy(ckpt.array(entry))
        if list(state[entry["name"]].shape) != entry["shape"]:
            raise IntegrityError(
                f"shape mismatch for {entry['name']}: checkpoint {entry['shape']} "
                f"vs model {list(state[entry['name']].shape)}"
            )
        new_state[entry["name"]] = tensor
    for name, value in ckpt.header["counters"].items():
        new_state[name] = torch.tensor(value, dtype=state[name].dtype)
    model.load_state_dict(new_state)
    return model, ckpt


def restore_optimizer(ckpt, model, optimizer):
    """Load Adam moments/steps saved alongside the model, if present."""
    opt_header = ckpt.header.get("optimizer")
    if not opt_header:
        return optimizer
    by_param = {}
    for entry in opt_header["entries"]:
        by_param.setdefault(entry["param"], {})[entry["kind"]] = torch.from_numpy(
            ckpt.array(entry)
        )
    params = dict(model.named_parameters())
    for name, kinds in by_param.items():
        optimizer.state[params[name]] = {
            "step": torch.tensor(opt_header["steps"][name]),
            "exp_avg": kinds["exp_avg"],
            "exp_avg_sq": kinds["exp_avg_sq"],
        }
    return optimizer


def export_mb_only(src_path, dst_path):
    """Write a stripped copy holding only main-branch parameters (no optimizer)."""
    model, ckpt = restore_model(src_path)
    mb_model = PoseDistillNet(**{**ckpt.arch, "sab": False, "feb": False})
    mb_state = mb_model.state_dict()
    full_state = model.state_dict()
    mb_model.load_state_dict({name: full_state[name] for name in mb_state})
    meta = {**ckpt.meta, "mb_only": True, "exported_from": os.path.basename(str(src_path))}
    save_checkpoint(dst_path, mb_model, optimizer=None, meta=meta)
    return dst_path
