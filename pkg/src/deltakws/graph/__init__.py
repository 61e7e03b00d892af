from .delta import (ConstraintViolated, DeltaMatrixSpec, apply_delta, band_sums,
                    build_delta_matrix, fold_delta, max_band_residual,
                    project_zero_sum, unfold_delta)
from .io import Malformed, VersionMismatch, load_model, save_model
from .layers import (BatchNormInference, Conv2D, Dense, FlatVector, FrozenDelta,
                     GraphError, Grid, ModelGraph, ShapeMismatch, Softmax, TooShort,
                     forward, forward_batch, frozen_delta_forward)
from .presets import CNN_5C3F, DNN_6F, build_cnn, build_dnn, build_preset

__all__ = [
    "BatchNormInference", "CNN_5C3F", "ConstraintViolated", "Conv2D", "DNN_6F",
    "DeltaMatrixSpec", "Dense", "FlatVector", "FrozenDelta", "GraphError", "Grid",
    "Malformed", "ModelGraph", "ShapeMismatch", "Softmax", "TooShort",
    "VersionMismatch", "apply_delta", "band_sums", "build_delta_matrix",
    "build_cnn", "build_dnn", "build_preset", "fold_delta", "forward", "forward_batch",
    "frozen_delta_forward", "load_model", "max_band_residual",
    "project_zero_sum", "save_model", "unfold_delta",
]
