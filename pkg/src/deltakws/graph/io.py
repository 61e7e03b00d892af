"""Versioned JSON model files.

Layout::

    {"format": "deltakws-model", "version": 1,
     "input_spec": {"type": "flat", "size": 540}
                 | {"type": "grid", "bands": 64, "frames": 100},
     "layers": [{"type": "dense", "activation": "relu", "shape": [R, C],
                 "weights": [...], "bias": [...]}, ...],
     "metadata": {...}}

Arrays are stored flattened row-major next to their ``shape``. Floats are
written with Python's shortest round-trip representation, so a
save/load cycle reproduces every weight bit for bit.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .layers import (BatchNormInference, Conv2D, Dense, FlatVector, FrozenDelta,
                     GraphError, Grid, ModelGraph, Softmax)

FORMAT = "deltakws-model"
VERSION = 1


class Malformed(GraphError):
    pass


class VersionMismatch(GraphError):
    pass


def _floats(a):
    return [float(v) for v in np.asarray(a, dtype=np.float64).ravel()]


def _array(doc, key, shape):
    try:
        values = np.array(doc[key], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise Malformed(f"layer field {key!r}: {exc}") from None
    if values.size != int(np.prod(shape)):
        raise Malformed(f"layer field {key!r} has {values.size} values, shape {shape}")
    return values.reshape(shape)


def layer_to_dict(layer) -> dict:
    if isinstance(layer, Dense):
        return {"type": "dense", "activation": layer.activation,
                "shape": list(layer.weights.shape),
                "weights": _floats(layer.weights), "bias": _floats(layer.bias)}
    if isinstance(layer, Conv2D):
        return {"type": "conv2d", "activation": layer.activation,
                "shape": list(layer.kernel.shape),
                "kernel": _floats(layer.kernel), "bias": _floats(layer.bias)}
    if isinstance(layer, BatchNormInference):
        return {"type": "batchnorm", "shape": [len(layer.gamma)],
                "gamma": _floats(layer.gamma), "beta": _floats(layer.beta),
                "mean": _floats(layer.mean), "variance": _floats(layer.variance),
                "epsilon": float(layer.epsilon)}
    if isinstance(layer, FrozenDelta):
        return {"type": "frozen_delta", "bands": layer.bands, "kernel": list(layer.kernel)}
    if isinstance(layer, Softmax):
        return {"type": "softmax"}
    raise TypeError(f"cannot serialize {type(layer).__name__}")


def layer_from_dict(doc: dict):
    kind = doc.get("type")
    try:
        if kind == "dense":
            r, c = doc["shape"]
            return Dense(_array(doc, "weights", (r, c)), _array(doc, "bias", (r,)),
                         doc["activation"])
        if kind == "conv2d":
            shape = tuple(doc["shape"])
            return Conv2D(_array(doc, "kernel", shape), _array(doc, "bias", shape[:1]),
                          doc["activation"])
        if kind == "batchnorm":
            size = tuple(doc["shape"])
            return BatchNormInference(*(_array(doc, k, size) for k in
                                        ("gamma", "beta", "mean", "variance")),
                                      epsilon=float(doc["epsilon"]))
        if kind == "frozen_delta":
            if tuple(doc.get("kernel", (-1.0, 1.0))) != (-1.0, 1.0):
                raise Malformed("frozen delta kernel must be [-1, 1]")
            return FrozenDelta(bands=doc.get("bands"))
        if kind == "softmax":
            return Softmax()
    except (KeyError, ValueError, TypeError) as exc:
        raise Malformed(f"bad {kind} layer: {exc}") from None
    raise Malformed(f"unknown layer type {kind!r}")


def model_to_dict(model: ModelGraph) -> dict:
    spec = model.input_spec
    if isinstance(spec, FlatVector):
        spec_doc = {"type": "flat", "size": spec.size}
    else:
        spec_doc = {"type": "grid", "bands": spec.bands, "frames": spec.frames}
    return {"format": FORMAT, "version": VERSION, "input_spec": spec_doc,
            "layers": [layer_to_dict(layer) for layer in model.layers],
            "metadata": model.metadata}


def model_from_dict(doc: dict) -> ModelGraph:
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise Malformed("not a deltakws model document")
    if doc.get("version") != VERSION:
        raise VersionMismatch(f"model version {doc.get('version')!r}, "
                              f"this build reads {VERSION}")
    spec_doc = doc.get("input_spec") or {}
    if spec_doc.get("type") == "flat":
        spec = FlatVector(int(spec_doc["size"]))
    elif spec_doc.get("type") == "grid":
        spec = Grid(int(spec_doc["bands"]), int(spec_doc["frames"]))
    else:
        raise Malformed(f"bad input_spec {spec_doc!r}")
    layers = [layer_from_dict(d) for d in doc.get("layers", [])]
    try:
        return ModelGraph(layers, spec, dict(doc.get("metadata", {})))
    except GraphError as exc:
        raise Malformed(str(exc)) from None


def save_model(model: ModelGraph, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model)) + "\n")


def load_model(path) -> ModelGraph:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise Malformed(f"{path}: {exc}") from None
    return model_from_dict(doc)
