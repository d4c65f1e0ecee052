"""Versioned binary checkpoints: a JSON header describing the config and
parameter table, followed by each parameter's float64 little-endian buffer
in header order. Loading rebuilds the model and restores exact bytes."""

from __future__ import annotations

import json
import struct

import numpy as np

from .model import ModelConfig, MtModel

_MAGIC = b"MTCK"
_VERSION = 1


def save_checkpoint(model: MtModel, path, step: int = 0) -> None:
    params = list(model.named_parameters())
    header = {
        "format_version": _VERSION,
        "config": model.config.to_dict(),
        "phase": model.phase,
        "step": step,
        "params": [{"name": name, "shape": list(t.shape)} for name, t in params],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as handle:
        handle.write(_MAGIC)
        handle.write(struct.pack("<II", _VERSION, len(blob)))
        handle.write(blob)
        for _, tensor in params:
            handle.write(np.ascontiguousarray(tensor.data, dtype="<f8").tobytes())


def read_checkpoint(path):
    """Raw view: (header dict, {name: array})."""
    with open(path, "rb") as handle:
        if handle.read(4) != _MAGIC:
            raise ValueError(f"{path}: not a model checkpoint")
        version, header_len = struct.unpack("<II", handle.read(8))
        if version != _VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        header = json.loads(handle.read(header_len).decode("utf-8"))
        arrays = {}
        for entry in header["params"]:
            shape = tuple(entry["shape"])
            size = int(np.prod(shape)) if shape else 1
            raw = handle.read(size * 8)
            if len(raw) != size * 8:
                raise ValueError(f"{path}: truncated parameter {entry['name']}")
            arrays[entry["name"]] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
    return header, arrays


def load_checkpoint(path) -> MtModel:
    """Rebuild the model from a checkpoint; parameter names and shapes must
    match the reconstructed architecture exactly."""
    header, arrays = read_checkpoint(path)
    model = MtModel(ModelConfig.from_dict(header["config"]))
    current = dict(model.named_parameters())
    if set(current) != set(arrays):
        missing = sorted(set(current) - set(arrays))
        extra = sorted(set(arrays) - set(current))
        raise ValueError(
            f"{path}: parameter table mismatch (missing {missing[:3]}, unexpected {extra[:3]})"
        )
    for name, tensor in current.items():
        stored = arrays[name]
        if stored.shape != tensor.data.shape:
            raise ValueError(
                f"{path}: {name} has shape {stored.shape}, model expects {tensor.data.shape}"
            )
        tensor.data = stored
    model.phase = header["phase"]
    model.loaded_step = header["step"]
    return model
