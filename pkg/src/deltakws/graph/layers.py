"""Layer types, the model container and batched inference."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class GraphError(Exception):
    pass


class ShapeMismatch(GraphError):
    pass


class TooShort(GraphError):
    pass


RELU = "relu"
IDENTITY = "identity"
ACTIVATIONS = (RELU, IDENTITY)


def _activate(x, activation):
    if activation == RELU:
        return np.maximum(x, 0.0)
    return x


def _check_activation(activation):
    if activation not in ACTIVATIONS:
        raise ValueError(f"unknown activation {activation!r}")


@dataclass(eq=False)
class Dense:
    weights: np.ndarray  # (R, C)
    bias: np.ndarray  # (R,)
    activation: str = RELU

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        _check_activation(self.activation)
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ShapeMismatch("dense weights must be (R, C) with bias (R,)")

    def output_shape(self, shape):
        width = int(np.prod(shape))
        if width != self.weights.shape[1]:
            raise ShapeMismatch(f"dense layer expects {self.weights.shape[1]} "
                                f"inputs, got {width}")
        return (self.weights.shape[0],)

    def apply(self, x):
        x = x.reshape(len(x), -1)
        return _activate(x @ self.weights.T + self.bias, self.activation)

    def n_params(self):
        return self.weights.size + self.bias.size

    def n_mul(self, shape):
        return self.weights.size


@dataclass(eq=False)
class Conv2D:
    """Valid, stride-1 convolution over ``(channels, bands, frames)`` inputs."""

    kernel: np.ndarray  # (out, in, kh, kw)
    bias: np.ndarray  # (out,)
    activation: str = RELU

    def __post_init__(self):
        self.kernel = np.asarray(self.kernel, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        _check_activation(self.activation)
        if self.kernel.ndim != 4 or self.bias.shape != (self.kernel.shape[0],):
            raise ShapeMismatch("conv kernel must be (out, in, kh, kw) with bias (out,)")

    def output_shape(self, shape):
        if len(shape) == 2:
            shape = (1,) + tuple(shape)
        c, h, w = shape
        out, cin, kh, kw = self.kernel.shape
        if c != cin or h < kh or w < kw:
            raise ShapeMismatch(f"conv kernel {self.kernel.shape} cannot consume {shape}")
        return (out, h - kh + 1, w - kw + 1)

    def apply(self, x):
        if x.ndim == 3:
            x = x[:, None]
        _, _, kh, kw = self.kernel.shape
        patches = sliding_window_view(x, (kh, kw), axis=(2, 3))  # N,C,H',W',kh,kw
        y = np.einsum("nchwij,ocij->nohw", patches, self.kernel, optimize=True)
        y += self.bias[None, :, None, None]
        return _activate(y, self.activation)

    def n_params(self):
        return self.kernel.size + self.bias.size

    def n_mul(self, shape):
        _, h, w = self.output_shape(shape)
        return self.kernel.size * h * w


@dataclass(eq=False)
class BatchNormInference:
    gamma: np.ndarray
    beta: np.ndarray
    mean: np.ndarray
    variance: np.ndarray
    epsilon: float = 1e-5

    def __post_init__(self):
        for name in ("gamma", "beta", "mean", "variance"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        if np.any(self.variance <= 0):
            raise ValueError("batchnorm variance entries must be > 0")
        if not (self.gamma.shape == self.beta.shape == self.mean.shape
                == self.variance.shape) or self.gamma.ndim != 1:
            raise ShapeMismatch("batchnorm parameters must be equal-length vectors")

    def output_shape(self, shape):
        if shape[0] != len(self.gamma):
            raise ShapeMismatch(f"batchnorm has {len(self.gamma)} features, "
                                f"input leading dim is {shape[0]}")
        return tuple(shape)

    def apply(self, x):
        scale = self.gamma / np.sqrt(self.variance + self.epsilon)
        shift = self.beta - self.mean * scale
        extra = (None,) * (x.ndim - 2)
        return x * scale[(slice(None),) + extra] + shift[(slice(None),) + extra]

    def n_params(self):
        return 4 * len(self.gamma)

    def n_mul(self, shape):
        return int(np.prod(shape))


@dataclass(eq=False)
class FrozenDelta:
    """Fixed ``[-1, 1]`` difference along time; never trained.

    On grid inputs the time axis is the last one. On flat band-major
    vectors ``bands`` must be set; each band's block of ``n`` frames becomes
    ``n - 1`` differences.
    """

    bands: int | None = None
    kernel: tuple = field(default=(-1.0, 1.0), init=False)

    def output_shape(self, shape):
        if len(shape) == 1:
            if not self.bands or shape[0] % self.bands:
                raise ShapeMismatch(f"flat input of {shape[0]} not divisible "
                                    f"into {self.bands} bands")
            n = shape[0] // self.bands
            if n < 2:
                raise TooShort("delta needs at least 2 frames per band")
            return (self.bands * (n - 1),)
        if shape[-1] < 2:
            raise TooShort("delta needs at least 2 frames")
        return tuple(shape[:-1]) + (shape[-1] - 1,)

    def apply(self, x):
        if x.ndim == 2:
            blocks = x.reshape(len(x), self.bands, -1)
            return (blocks[..., 1:] - blocks[..., :-1]).reshape(len(x), -1)
        return x[..., 1:] - x[..., :-1]

    def n_params(self):
        return 0

    def n_mul(self, shape):
        return 0


@dataclass(eq=False)
class Softmax:
    def output_shape(self, shape):
        if len(shape) != 1 or shape[0] < 2:
            raise ShapeMismatch("softmax needs a flat input of at least 2 classes")
        return tuple(shape)

    def apply(self, x):
        z = x - x.max(axis=-1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=-1, keepdims=True)

    def n_params(self):
        return 0

    def n_mul(self, shape):
        return 0


Layer = Union[Dense, Conv2D, BatchNormInference, FrozenDelta, Softmax]


@dataclass(frozen=True)
class FlatVector:
    size: int

    @property
    def shape(self):
        return (self.size,)


@dataclass(frozen=True)
class Grid:
    bands: int
    frames: int

    @property
    def shape(self):
        return (self.bands, self.frames)


@dataclass(eq=False)
class ModelGraph:
    layers: list
    input_spec: FlatVector | Grid
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not self.layers or not isinstance(self.layers[-1], Softmax):
            raise ShapeMismatch("final layer must be Softmax")
        shape = self.input_spec.shape
        for layer in self.layers:
            if isinstance(layer, Conv2D) and len(shape) == 2:
                shape = (1,) + shape
            shape = layer.output_shape(shape)
        return shape

    @property
    def n_classes(self) -> int:
        return self.validate()[0]

    def layer_shapes(self):
        shape = self.input_spec.shape
        shapes = [shape]
        for layer in self.layers:
            if isinstance(layer, Conv2D) and len(shape) == 2:
                shape = (1,) + shape
            shape = layer.output_shape(shape)
            shapes.append(shape)
        return shapes

    def n_params(self) -> int:
        return sum(layer.n_params() for layer in self.layers)

    def n_mul(self) -> int:
        shapes = self.layer_shapes()
        total = 0
        for layer, shape in zip(self.layers, shapes):
            if isinstance(layer, Conv2D) and len(shape) == 2:
                shape = (1,) + shape
            total += layer.n_mul(shape)
        return total

    @property
    def first_dense(self) -> int:
        for i, layer in enumerate(self.layers):
            if isinstance(layer, Dense):
                return i
        raise GraphError("model has no dense layer")


def forward_batch(model: ModelGraph, xs) -> np.ndarray:
    """Posteriors for a batch whose trailing dims match ``model.input_spec``."""
    x = np.asarray(xs, dtype=np.float64)
    if x.shape[1:] != model.input_spec.shape:
        raise ShapeMismatch(f"input shape {x.shape[1:]} != {model.input_spec.shape}")
    for layer in model.layers:
        x = layer.apply(x)
    return x


def forward(model: ModelGraph, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != model.input_spec.shape:
        raise ShapeMismatch(f"input shape {x.shape} != {model.input_spec.shape}")
    return forward_batch(model, x[None])[0]


def frozen_delta_forward(grid) -> np.ndarray:
    """Apply the delta layer to one ``bands x frames`` grid."""
    grid = np.asarray(grid)
    if grid.ndim != 2:
        raise ShapeMismatch("expected a bands x frames grid")
    if grid.shape[1] < 2:
        raise TooShort("delta needs at least 2 frames")
    return grid[:, 1:] - grid[:, :-1]
