"""Checkpoints: one JSON header line, then raw little-endian float64 buffers in declared order."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .layers import Module

MAGIC = "opflearn-checkpoint"


class CheckpointError(RuntimeError):
    pass


def _entries(model: Module):
    return [(n, p.data) for n, p in model.named_parameters()] + model.buffers()


def save_checkpoint(path: str | Path, model: Module, spec_hash: str, seed: int, epoch: int,
                    extra: dict | None = None) -> None:
    entries = _entries(model)
    header = {"format": MAGIC, "spec_hash": spec_hash, "seed": seed, "epoch": epoch,
              "tensors": [[n, list(a.shape)] for n, a in entries], "extra": extra or {}}
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for _, a in entries:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def read_header(path: str | Path) -> dict:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline())
    if header.get("format") != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint")
    return header


def load_checkpoint(path: str | Path, model: Module, spec_hash: str | None = None) -> dict:
    """Fill ``model`` in place from ``path``; returns the header."""
    with open(path, "rb") as fh:
        header = json.loads(fh.readline())
        blob = fh.read()
    if header.get("format") != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint")
    if spec_hash is not None and header["spec_hash"] != spec_hash:
        raise CheckpointError(f"{path}: written for model spec {header['spec_hash']}, expected {spec_hash}")
    entries = _entries(model)
    names = [[n, list(a.shape)] for n, a in entries]
    if names != header["tensors"]:
        raise CheckpointError(f"{path}: parameter layout does not match the model")
    need = sum(a.size for _, a in entries) * 8
    if len(blob) != need:
        raise CheckpointError(f"{path}: expected {need} bytes of parameters, found {len(blob)}")
    off = 0
    for _, a in entries:
        n = a.size * 8
        a[...] = np.frombuffer(blob[off:off + n], dtype="<f8").reshape(a.shape)
        off += n
    return header
