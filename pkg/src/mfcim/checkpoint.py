"""Model checkpoints: a text header, a little-endian tensor blob, and a
checksum.

Layout:  magic line, one JSON line describing the format version, layer
configs, tensor index and blob SHA-256, then the raw tensor bytes.  The
round trip is lossless (float64 little-endian), so a reloaded model
evaluates identically.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .network import Model, build_model

__all__ = ["save_model", "load_model", "CheckpointError"]

MAGIC = b"MFCIM-CKPT\n"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_model(model: Model, path, metadata: dict | None = None):
    """Write model config + parameters; returns the header dict."""
    tensors = []
    blob = bytearray()
    for key, _layer, _name, value in model.parameters():
        data = np.ascontiguousarray(value, dtype="<f8")
        tensors.append({
            "key": key,
            "shape": list(data.shape),
            "offset": len(blob),
            "nbytes": data.nbytes,
        })
        blob.extend(data.tobytes())
    header = {
        "format_version": FORMAT_VERSION,
        "model": model.config(),
        "tensors": tensors,
        "checksum": hashlib.sha256(bytes(blob)).hexdigest(),
        "metadata": metadata or {},
    }
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(bytes(blob))
    return header


def load_model(path):
    """Rebuild a model from a checkpoint; returns (model, metadata).

    Refuses unknown format versions and blobs whose checksum does not
    match the header.
    """
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    body = raw[len(MAGIC):]
    nl = body.index(b"\n")
    header = json.loads(body[:nl])
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: format version {header.get('format_version')} not "
            f"supported (expected {FORMAT_VERSION})")
    blob = body[nl + 1:]
    digest = hashlib.sha256(blob).hexdigest()
    if digest != header["checksum"]:
        raise CheckpointError(f"{path}: checksum mismatch, blob corrupted")
    model = build_model(header["model"], seed=0)
    params = {key: (layer, name) for key, layer, name, _ in model.parameters()}
    for entry in header["tensors"]:
        layer, name = params[entry["key"]]
        start, n = entry["offset"], entry["nbytes"]
        arr = np.frombuffer(blob[start:start + n], dtype="<f8").reshape(
            entry["shape"])
        layer.params[name] = arr.astype(np.float64).copy()
    return model, header["metadata"]
