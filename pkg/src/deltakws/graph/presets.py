"""The two reference architectures, with randomly initialized weights.

Hidden widths are not published; the ones below were picked to land near
the published budgets (DNN: 222K parameters and multiplies; CNN: 5.6M
parameters, 6.7M multiplies) and are recorded in the model metadata.
"""

from __future__ import annotations

import numpy as np

from .delta import DeltaMatrixSpec, project_zero_sum
from .layers import Conv2D, Dense, FlatVector, FrozenDelta, Grid, IDENTITY, ModelGraph, Softmax

DNN_6F = "dnn-6f"
CNN_5C3F = "cnn-5c3f"

DELTA_NONE = "none"
DELTA_FROZEN = "frozen-delta"
DELTA_ZERO_SUM = "zero-sum"
DELTA_MODES = (DELTA_NONE, DELTA_FROZEN, DELTA_ZERO_SUM)

DNN_BANDS, DNN_FRAMES = 20, 27  # 80 frames downsampled by 3
DNN_HIDDEN = (256, 128, 128, 128, 128)
CNN_BANDS, CNN_FRAMES = 64, 100
CNN_CHANNELS = (2, 2, 2, 2, 1)
CNN_KERNEL = (3, 3)
CNN_HIDDEN = (1000, 700)

PRESETS = {
    DNN_6F: {"published_params": 222_000, "published_mul": 222_000,
             "smoothing": {"type": "wma", "window": 30}},
    CNN_5C3F: {"published_params": 5_600_000, "published_mul": 6_700_000,
               "smoothing": {"type": "ema", "alpha": 0.1}},
}


def he_dense(rng, n_in, n_out, activation="relu"):
    w = rng.normal(0.0, np.sqrt(2.0 / n_in), size=(n_out, n_in))
    return Dense(w, np.zeros(n_out), activation)


def _dnn_layers(rng, widths, delta, bands, frames):
    layers = []
    n_in = bands * frames
    if delta == DELTA_FROZEN:
        layers.append(FrozenDelta(bands=bands))
        n_in = bands * (frames - 1)
    sizes = list(widths) + [2]
    for i, width in enumerate(sizes):
        act = IDENTITY if i == len(sizes) - 1 else "relu"
        layers.append(he_dense(rng, n_in, width, act))
        n_in = width
    if delta == DELTA_ZERO_SUM:
        first = layers[0]
        first.weights = project_zero_sum(first.weights, DeltaMatrixSpec(frames, bands))
    layers.append(Softmax())
    return layers


def build_dnn(seed=0, delta=DELTA_NONE, hidden=DNN_HIDDEN, bands=DNN_BANDS,
              frames=DNN_FRAMES, preset=DNN_6F) -> ModelGraph:
    if delta not in DELTA_MODES:
        raise ValueError(f"unknown delta mode {delta!r}")
    rng = np.random.default_rng(seed)
    layers = _dnn_layers(rng, hidden, delta, bands, frames)
    meta = {"preset": preset, "feature_preset": preset, "delta": delta,
            "bands": bands, "frames": frames, "hidden": list(hidden),
            "wake_word_class": 1,
            "smoothing": dict(PRESETS.get(preset, PRESETS[DNN_6F])["smoothing"])}
    model = ModelGraph(layers, FlatVector(bands * frames), meta)
    _record_budget(model)
    return model


def build_cnn(seed=0, delta=DELTA_NONE) -> ModelGraph:
    if delta not in (DELTA_NONE, DELTA_FROZEN):
        raise ValueError("the CNN preset supports only 'none' or 'frozen-delta'")
    rng = np.random.default_rng(seed)
    layers = []
    h, w = CNN_BANDS, CNN_FRAMES
    if delta == DELTA_FROZEN:
        layers.append(FrozenDelta())
        w -= 1
    cin = 1
    kh, kw = CNN_KERNEL
    for cout in CNN_CHANNELS:
        fan_in = cin * kh * kw
        kernel = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(cout, cin, kh, kw))
        layers.append(Conv2D(kernel, np.zeros(cout)))
        cin, h, w = cout, h - kh + 1, w - kw + 1
    n_in = cin * h * w
    sizes = list(CNN_HIDDEN) + [2]
    for i, width in enumerate(sizes):
        act = IDENTITY if i == len(sizes) - 1 else "relu"
        layers.append(he_dense(rng, n_in, width, act))
        n_in = width
    layers.append(Softmax())
    meta = {"preset": CNN_5C3F, "feature_preset": CNN_5C3F, "delta": delta,
            "bands": CNN_BANDS, "frames": CNN_FRAMES, "channels": list(CNN_CHANNELS),
            "hidden": list(CNN_HIDDEN), "wake_word_class": 1,
            "smoothing": dict(PRESETS[CNN_5C3F]["smoothing"])}
    model = ModelGraph(layers, Grid(CNN_BANDS, CNN_FRAMES), meta)
    _record_budget(model)
    return model


def _record_budget(model):
    ref = PRESETS.get(model.metadata["preset"])
    model.metadata["budget"] = {
        "params": model.n_params(), "mul": model.n_mul(),
        "published_params": ref["published_params"] if ref else None,
        "published_mul": ref["published_mul"] if ref else None,
        "approximate": True,
    }


def build_preset(name: str, seed=0, delta=DELTA_NONE) -> ModelGraph:
    if name == DNN_6F:
        return build_dnn(seed, delta)
    if name == CNN_5C3F:
        return build_cnn(seed, delta)
    raise ValueError(f"unknown preset {name!r}; choose {DNN_6F} or {CNN_5C3F}")
