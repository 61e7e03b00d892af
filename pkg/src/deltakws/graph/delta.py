"""The temporal-delta operator on band-major flattened inputs.

A flattened input of ``L`` bands with ``n`` frames each is laid out
band-major: index ``i*n + j`` holds frame ``j`` of band ``i``. The delta
operator ``D`` is block-diagonal with ``L`` copies of the ``(n-1) x n``
first-difference matrix. Folding it into a dense layer gives ``V = W D``,
whose rows sum to zero inside every band block; conversely any such ``V``
factors back into ``W D``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layers import GraphError, ShapeMismatch


class ConstraintViolated(GraphError):
    pass


@dataclass(frozen=True)
class DeltaMatrixSpec:
    n: int  # frames per band
    L: int  # bands

    def __post_init__(self):
        if self.n < 2 or self.L < 1:
            raise ValueError(f"need n >= 2 and L >= 1, got n={self.n}, L={self.L}")

    @property
    def in_width(self) -> int:
        return self.n * self.L

    @property
    def out_width(self) -> int:
        return (self.n - 1) * self.L


def build_delta_block(n: int) -> np.ndarray:
    d = np.zeros((n - 1, n))
    idx = np.arange(n - 1)
    d[idx, idx] = -1.0
    d[idx, idx + 1] = 1.0
    return d


def build_delta_matrix(spec: DeltaMatrixSpec) -> np.ndarray:
    """Dense block-diagonal ``D``; only meant for small shapes and tests."""
    return np.kron(np.eye(spec.L), build_delta_block(spec.n))


def apply_delta(x, spec: DeltaMatrixSpec) -> np.ndarray:
    """Matrix-free ``D @ x`` for one vector or a batch of row vectors."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != spec.in_width:
        raise ShapeMismatch(f"expected width {spec.in_width}, got {x.shape[-1]}")
    blocks = x.reshape(x.shape[:-1] + (spec.L, spec.n))
    return (blocks[..., 1:] - blocks[..., :-1]).reshape(x.shape[:-1] + (spec.out_width,))


def _blocks(M, spec, n):
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[1] != spec.L * n:
        raise ShapeMismatch(f"expected {spec.L * n} columns, got shape {M.shape}")
    return M.reshape(M.shape[0], spec.L, n)


def fold_delta(W, spec: DeltaMatrixSpec) -> np.ndarray:
    """``V = W @ D`` without materializing ``D``."""
    w = _blocks(W, spec, spec.n - 1)
    R = w.shape[0]
    v = np.empty((R, spec.L, spec.n))
    v[..., 0] = -w[..., 0]
    v[..., 1:-1] = w[..., :-1] - w[..., 1:]
    v[..., -1] = w[..., -1]
    return v.reshape(R, spec.in_width)


def band_sums(V, spec: DeltaMatrixSpec) -> np.ndarray:
    """Per-row, per-band sums, shape ``(R, L)``."""
    return _blocks(V, spec, spec.n).sum(axis=2)


def max_band_residual(V, spec: DeltaMatrixSpec) -> float:
    sums = band_sums(V, spec)
    return float(np.abs(sums).max()) if sums.size else 0.0


def unfold_delta(V, spec: DeltaMatrixSpec, tol: float = 1e-4) -> np.ndarray:
    """Recover ``W`` with ``W @ D == V`` from a zero-sum ``V``.

    ``tol`` is relative to each row's largest magnitude entry.
    """
    v = _blocks(V, spec, spec.n)
    scale = np.abs(v).reshape(len(v), -1).max(axis=1, initial=0.0)
    sums = np.abs(v.sum(axis=2))
    bad = sums > tol * np.maximum(scale, np.finfo(float).tiny)[:, None]
    bad &= sums > 0
    if np.any(bad):
        r, i = np.argwhere(bad)[0]
        raise ConstraintViolated(
            f"row {r} band {i} sums to {v[r, i].sum():.3g}; "
            f"limit is {tol:g} x max|row| = {tol * scale[r]:.3g}")
    w = -np.cumsum(v[..., :-1], axis=2)
    return w.reshape(len(v), spec.out_width)


def project_zero_sum(V, spec: DeltaMatrixSpec) -> np.ndarray:
    """Subtract each band block's mean from every row.

    This is the orthogonal projection onto matrices satisfying the
    per-band zero-sum constraint.
    """
    v = _blocks(V, spec, spec.n)
    return (v - v.mean(axis=2, keepdims=True)).reshape(len(v), spec.in_width)
