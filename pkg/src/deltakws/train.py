"""Desk-scale trainer for dense models: cross-entropy, ADAM, inverted dropout.

Three first-layer regimes are supported:

* ``baseline``: plain dense stack.
* ``frozen-delta``: the model starts with a :class:`FrozenDelta` layer that
  is carried through training untouched.
* ``zero-sum``: after every optimizer step the first dense layer is
  projected back onto the per-band zero-sum subspace.
"""

from __future__ import annotations

import copy
import csv
import enum
from dataclasses import dataclass

import numpy as np

from .graph.delta import DeltaMatrixSpec, project_zero_sum
from .graph.layers import IDENTITY, RELU, Dense, FrozenDelta, ModelGraph, ShapeMismatch, Softmax

PROB_FLOOR = 1e-12


class UnsupportedLayer(Exception):
    pass


class FirstLayerMode(enum.Enum):
    BASELINE = "baseline"
    FROZEN_DELTA = "frozen-delta"
    ZERO_SUM = "zero-sum"


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    dropout_prob: float = 0.3
    epochs: int = 10
    batch_size: int = 64
    seed: int = 0
    first_layer_mode: FirstLayerMode = FirstLayerMode.BASELINE
    bands: int = 20  # band count of flat inputs, used by zero-sum projection
    # inputs are fed as (x - input_offset) * input_scale; folded away afterwards
    input_offset: float = 0.0
    input_scale: float = 1.0

    def __post_init__(self):
        self.first_layer_mode = FirstLayerMode(self.first_layer_mode)
        if not 0 <= self.dropout_prob < 1:
            raise ValueError("dropout_prob must lie in [0, 1)")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")


@dataclass
class LabeledExample:
    input: np.ndarray
    label: int


@dataclass
class EpochStats:
    epoch: int
    mean_loss: float
    train_accuracy: float


@dataclass
class AdamState:
    m: list
    v: list
    step: int = 0

    @classmethod
    def zeros_like(cls, params):
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


# --------------------------------------------------------------------------


def cross_entropy_loss(posteriors, target):
    """Loss ``-ln p[target]`` and its gradient w.r.t. the pre-softmax logits.

    For a batch (``posteriors`` of shape ``(N, K)``), returns the mean loss
    and the gradient of that mean.
    """
    p = np.asarray(posteriors, dtype=np.float64)
    if p.ndim == 1:
        loss = -np.log(max(p[target], PROB_FLOOR))
        grad = p.copy()
        grad[target] -= 1.0
        return float(loss), grad
    target = np.asarray(target)
    rows = np.arange(len(p))
    loss = -np.log(np.maximum(p[rows, target], PROB_FLOOR)).mean()
    grad = p.copy()
    grad[rows, target] -= 1.0
    return float(loss), grad / len(p)


def adam_step(params, grads, state: AdamState, config: TrainConfig):
    """Bias-corrected ADAM update; returns new parameter arrays and state."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeMismatch("params, grads and state differ in length")
    b1, b2 = config.adam_beta1, config.adam_beta2
    t = state.step + 1
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape or p.shape != m.shape:
            raise ShapeMismatch(f"shape {p.shape} vs gradient {g.shape}")
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        new_params.append(p - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.adam_epsilon))
        new_m.append(m)
        new_v.append(v)
    return new_params, AdamState(new_m, new_v, t)


# --------------------------------------------------------------------------


def _split_layers(model: ModelGraph, mode: FirstLayerMode):
    layers = model.layers
    delta = None
    body = list(layers)
    if body and isinstance(body[0], FrozenDelta):
        delta = body.pop(0)
    if mode is FirstLayerMode.FROZEN_DELTA and delta is None:
        raise UnsupportedLayer("frozen-delta mode needs a leading FrozenDelta layer")
    if mode is not FirstLayerMode.FROZEN_DELTA and delta is not None:
        raise UnsupportedLayer(f"{mode.value} mode cannot train through a FrozenDelta layer")
    if not isinstance(body[-1], Softmax):
        raise UnsupportedLayer("model must end in Softmax")
    dense = body[:-1]
    for layer in dense:
        if not isinstance(layer, Dense):
            raise UnsupportedLayer(f"{type(layer).__name__} is not trainable here")
    if not dense or dense[-1].activation != IDENTITY:
        raise UnsupportedLayer("the layer feeding Softmax must be Dense with identity activation")
    return delta, dense


class _Net:
    """Flat view of a dense stack for training."""

    def __init__(self, delta, dense):
        self.delta = delta
        self.acts = [d.activation for d in dense]
        self.params = []
        for d in dense:
            self.params += [d.weights.copy(), d.bias.copy()]

    def forward(self, x, rng=None, dropout=0.0):
        h = self.delta.apply(x) if self.delta is not None else x
        cache = []
        n_layers = len(self.acts)
        for k in range(n_layers):
            W, b = self.params[2 * k], self.params[2 * k + 1]
            z = h @ W.T + b
            a = np.maximum(z, 0.0) if self.acts[k] == RELU else z
            mask = None
            if k < n_layers - 1 and dropout > 0 and rng is not None:
                mask = (rng.random(a.shape) >= dropout) / (1.0 - dropout)
                a = a * mask
            cache.append((h, z, mask))
            h = a
        z = h - h.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True), cache

    def backward(self, grad_logits, cache):
        grads = [None] * len(self.params)
        g = grad_logits
        for k in reversed(range(len(self.acts))):
            h_in, z, mask = cache[k]
            if k < len(self.acts) - 1:
                if mask is not None:
                    g = g * mask
                if self.acts[k] == RELU:
                    g = g * (z > 0)
            W = self.params[2 * k]
            grads[2 * k] = g.T @ h_in
            grads[2 * k + 1] = g.sum(axis=0)
            if k:
                g = g @ W
        return grads


def loss_and_grads(model: ModelGraph, X, y, mode=FirstLayerMode.BASELINE):
    """Mean cross-entropy on ``(X, y)`` and its gradient for every dense
    weight and bias, in layer order. Dropout is off."""
    delta, dense = _split_layers(model, FirstLayerMode(mode))
    net = _Net(delta, dense)
    probs, cache = net.forward(np.asarray(X, dtype=np.float64))
    loss, g = cross_entropy_loss(probs, y)
    return loss, net.backward(g, cache)


def _as_arrays(dataset):
    if isinstance(dataset, tuple):
        X, y = dataset
    else:
        X = np.stack([ex.input for ex in dataset])
        y = np.array([ex.label for ex in dataset])
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(X) == 0 or len(X) != len(y):
        raise ValueError("dataset must be non-empty with one label per input")
    return X, y


def _zero_sum_spec(net, config):
    width = net.params[0].shape[1]
    if width % config.bands:
        raise ShapeMismatch(f"first layer width {width} not divisible by {config.bands} bands")
    return DeltaMatrixSpec(width // config.bands, config.bands)


def train(model: ModelGraph, dataset, config: TrainConfig, on_epoch=None):
    """Train a copy of ``model``; returns ``(trained_model, history)``.

    ``dataset`` is ``(X, y)`` or a sequence of :class:`LabeledExample`.
    Deterministic for a given ``config.seed``. ``on_epoch(stats, params)``
    is called after each epoch with the raw dense weights and biases.
    """
    mode = config.first_layer_mode
    delta, dense = _split_layers(model, mode)
    X, y = _as_arrays(dataset)
    if y.max() >= model.n_classes or y.min() < 0:
        raise ValueError("class index out of range for the model output")
    trained = copy.deepcopy(model)
    if config.epochs == 0:
        return trained, []

    net = _Net(delta, dense)
    spec = _zero_sum_spec(net, config) if mode is FirstLayerMode.ZERO_SUM else None
    if spec is not None:
        net.params[0] = project_zero_sum(net.params[0], spec)

    Xn = (X - config.input_offset) * config.input_scale
    rng = np.random.default_rng(config.seed)
    state = AdamState.zeros_like(net.params)
    history = []
    n = len(Xn)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        losses, sizes = [], []
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            probs, cache = net.forward(Xn[idx], rng, config.dropout_prob)
            loss, g = cross_entropy_loss(probs, y[idx])
            grads = net.backward(g, cache)
            net.params, state = adam_step(net.params, grads, state, config)
            if spec is not None:
                net.params[0] = project_zero_sum(net.params[0], spec)
            losses.append(loss)
            sizes.append(len(idx))
        probs, _ = net.forward(Xn)
        accuracy = float(np.mean(probs.argmax(axis=1) == y))
        history.append(EpochStats(epoch, float(np.average(losses, weights=sizes)), accuracy))
        if on_epoch is not None:
            on_epoch(history[-1], net.params)

    _write_back(trained, net, delta is not None, config)
    return trained, history


def _write_back(model, net, has_delta, config):
    dense = [layer for layer in model.layers if isinstance(layer, Dense)]
    for k, layer in enumerate(dense):
        layer.weights = net.params[2 * k]
        layer.bias = net.params[2 * k + 1]
    # fold the input affine map into the first dense layer
    first = dense[0]
    s, mu = config.input_scale, config.input_offset
    if not has_delta and mu != 0.0:
        first.bias = first.bias - s * mu * first.weights.sum(axis=1)
    first.weights = first.weights * s
    model.metadata = dict(model.metadata, trained_mode=config.first_layer_mode.value)


def write_history_csv(history, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "mean_loss", "train_accuracy"])
        for h in history:
            w.writerow([h.epoch, f"{h.mean_loss:.9g}", f"{h.train_accuracy:.6f}"])
