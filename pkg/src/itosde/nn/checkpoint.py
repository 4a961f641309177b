"""Checkpoint format.

`<stem>.bin` holds every parameter and buffer flattened row-major and
concatenated as little-endian float32.  The structured-text header naming
each entry (name, shape, byte offset, trainable flag) travels as a JSON
sidecar `<stem>.json`, together with whatever run metadata the caller passes.

Float32 is the interchange format; exact-resume state (float64 parameters
plus optimizer moments) is a separate `.state.npz` written by the trainer.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .layers import Module

FORMAT = "itosde-checkpoint-v1"


def header_path(bin_path) -> Path:
    return Path(bin_path).with_suffix(".json")


def _entries(module: Module):
    named = [(n, p.data, True) for n, p in module.named_parameters()]
    named += [(n, b, False) for n, b in module.named_buffers()]
    return named


def save_checkpoint(bin_path, module: Module, meta: dict | None = None) -> None:
    bin_path = Path(bin_path)
    params = []
    blobs = []
    offset = 0
    for name, arr, trainable in _entries(module):
        flat = np.ascontiguousarray(arr, dtype="<f4").reshape(-1)
        params.append({
            "name": name,
            "shape": list(arr.shape),
            "offset_bytes": offset,
            "trainable": trainable,
        })
        blobs.append(flat.tobytes())
        offset += flat.nbytes
    header = {"format": FORMAT, "total_bytes": offset, "params": params}
    if meta:
        header["meta"] = meta
    bin_path.write_bytes(b"".join(blobs))
    header_path(bin_path).write_text(json.dumps(header, indent=2, sort_keys=True))


def read_header(bin_path) -> dict:
    return json.loads(header_path(bin_path).read_text())


def load_checkpoint(bin_path, module: Module) -> dict:
    """Load a blob into `module`; returns the header for metadata access."""
    bin_path = Path(bin_path)
    header = read_header(bin_path)
    if header.get("format") != FORMAT:
        raise ValueError(f"unrecognized checkpoint format: {header.get('format')!r}")
    blob = bin_path.read_bytes()
    if len(blob) != header["total_bytes"]:
        raise ValueError(
            f"checkpoint blob is {len(blob)} bytes, header says {header['total_bytes']}"
        )
    by_name = {e["name"]: e for e in header["params"]}
    own = {n: (p, True) for n, p in module.named_parameters()}
    own.update({n: (b, False) for n, b in module.named_buffers()})
    if set(by_name) != set(own):
        missing = set(own) - set(by_name)
        extra = set(by_name) - set(own)
        raise ValueError(f"checkpoint/model mismatch: missing={sorted(missing)}, extra={sorted(extra)}")
    for name, entry in by_name.items():
        target, trainable = own[name]
        shape = tuple(entry["shape"])
        n = int(np.prod(shape)) if shape else 1
        start = entry["offset_bytes"]
        arr = np.frombuffer(blob, dtype="<f4", count=n, offset=start).reshape(shape)
        if trainable:
            if target.data.shape != shape:
                raise ValueError(f"{name}: checkpoint shape {shape} != model shape {target.data.shape}")
            target.data = arr.astype(np.float64)
        else:
            module.set_buffer(name, arr.astype(np.float64))
    return header
