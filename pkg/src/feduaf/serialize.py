"""Named-tensor parameter container.

Parameters travel as a flat list of (name, float64 array) pairs, both
in-memory (server/client exchange) and on disk as a versioned JSON
document:

    {"format": "feduaf.params", "version": 1,
     "tensors": [{"name": "...", "shape": [2, 3], "data": [row-major floats]}]}

Names follow `<component>.layers.<i>.weight` / `.bias`, e.g.
`shared_head.layers.0.weight` or `encoder.v.layers.1.bias`.
"""

from __future__ import annotations

import json

import numpy as np

from .exceptions import ShapeError, ValidationError
from .nn import Mlp

FORMAT_NAME = "feduaf.params"
FORMAT_VERSION = 1


def mlp_tensors(prefix: str, mlp: Mlp) -> list:
    """Extract (name, array-copy) pairs for every layer of an MLP."""
    out = []
    for i, layer in enumerate(mlp.layers):
        out.append((f"{prefix}.layers.{i}.weight", layer.weights.copy()))
        out.append((f"{prefix}.layers.{i}.bias", layer.bias.copy()))
    return out


def assign_mlp_tensors(prefix: str, mlp: Mlp, tensors: dict):
    """Copy named tensors into an MLP's layers; shapes must match."""
    for i, layer in enumerate(mlp.layers):
        for attr, arr in (("weight", layer.weights), ("bias", layer.bias)):
            name = f"{prefix}.layers.{i}.{attr}"
            if name not in tensors:
                raise ShapeError(f"missing tensor {name!r}")
            src = tensors[name]
            if src.shape != arr.shape:
                raise ShapeError(
                    f"tensor {name!r} has shape {src.shape}, expected {arr.shape}"
                )
            arr[...] = src


def clone_tensors(tensors: list) -> list:
    return [(name, arr.copy()) for name, arr in tensors]


def to_container(tensors: list) -> dict:
    doc = {"format": FORMAT_NAME, "version": FORMAT_VERSION, "tensors": []}
    for name, arr in tensors:
        arr = np.asarray(arr, dtype=np.float64)
        if not np.isfinite(arr).all():
            raise ValidationError(f"tensor {name!r} contains non-finite values")
        doc["tensors"].append(
            {"name": name, "shape": list(arr.shape), "data": arr.ravel().tolist()}
        )
    return doc


def from_container(doc: dict) -> list:
    if not isinstance(doc, dict) or doc.get("format") != FORMAT_NAME:
        raise ValidationError("not a feduaf.params container")
    if doc.get("version") != FORMAT_VERSION:
        raise ValidationError(f"unsupported container version {doc.get('version')!r}")
    out = []
    for entry in doc.get("tensors", []):
        name, shape, data = entry["name"], entry["shape"], entry["data"]
        arr = np.array(data, dtype=np.float64)
        if arr.size != int(np.prod(shape, dtype=np.int64)):
            raise ValidationError(f"tensor {name!r}: data length does not match shape")
        out.append((name, arr.reshape(shape)))
    return out


def save_params(path, tensors: list):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(to_container(tensors), fh)


def load_params(path) -> list:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"malformed parameter file: {exc}") from exc
    return from_container(doc)
