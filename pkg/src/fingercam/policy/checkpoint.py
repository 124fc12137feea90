"""Checkpoint container: a single file holding a JSON manifest (config,
normalization stats, schedule, step count, parameter table) followed by raw
little-endian parameter blobs, so any implementation can reload it.

Layout: magic 'FCKP' | u32 version | u64 manifest length | manifest JSON
(utf-8) | concatenated parameter bytes in manifest order.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import struct
from pathlib import Path

import numpy as np
import torch

from .core import DiffusionPolicy, PolicyConfig
from .normalize import NormStats

MAGIC = b"FCKP"
VERSION = 1


class CheckpointError(RuntimeError):
    pass


def config_hash(config: PolicyConfig) -> str:
    blob = json.dumps(dataclasses.asdict(config), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def save_checkpoint(policy: DiffusionPolicy, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    entries = []
    blobs = []
    offset = 0

    def add(name, tensor):
        nonlocal offset
        arr = tensor.detach().numpy()
        lit = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        raw = np.ascontiguousarray(lit).tobytes()
        entries.append(
            {"name": name, "dtype": str(arr.dtype), "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)}
        )
        blobs.append(raw)
        offset += len(raw)

    for name, p in policy.all_named_tensors():
        add(name, p)
    if policy._ema is not None:
        for name, t in policy._ema.items():
            add(f"ema.{name}", t)

    manifest = {
        "config": dataclasses.asdict(policy.config),
        "config_hash": config_hash(policy.config),
        "norm_stats": policy.stats.to_dict() if policy.stats is not None else None,
        "schedule": policy.schedule.to_dict(),
        "train_steps": policy.train_steps,
        "params": entries,
    }
    header = json.dumps(manifest).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<IQ", VERSION, len(header)))
        f.write(header)
        for raw in blobs:
            f.write(raw)


def load_checkpoint(path) -> DiffusionPolicy:
    path = Path(path)
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != MAGIC:
            raise CheckpointError(f"{path}: bad magic {magic!r}")
        version, header_len = struct.unpack("<IQ", f.read(12))
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
        manifest = json.loads(f.read(header_len))
        blob = f.read()

    config = PolicyConfig(**manifest["config"])
    stats = NormStats.from_dict(manifest["norm_stats"]) if manifest["norm_stats"] else None
    policy = DiffusionPolicy(config, stats)
    policy.train_steps = int(manifest["train_steps"])

    arrays = {}
    for e in manifest["params"]:
        raw = blob[e["offset"] : e["offset"] + e["nbytes"]]
        arr = np.frombuffer(raw, dtype=np.dtype(e["dtype"]).newbyteorder("<")).reshape(e["shape"])
        arrays[e["name"]] = arr.astype(e["dtype"])

    with torch.no_grad():
        for name, p in policy.all_named_tensors():
            if name not in arrays:
                raise CheckpointError(f"{path}: checkpoint missing parameter {name!r}")
            p.copy_(torch.as_tensor(arrays[name]))
        if policy._ema is not None:
            for name in policy._ema:
                key = f"ema.{name}"
                if key in arrays:
                    policy._ema[name] = torch.as_tensor(arrays[key]).clone()
    return policy
