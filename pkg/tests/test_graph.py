import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deltakws import graph
from deltakws.features import FeatureKind, FeatureMatrix, FrameConfig, delta_lfbe
from deltakws.graph import (BatchNormInference, Conv2D, Dense, FlatVector, FrozenDelta, Grid,
                            ModelGraph, Softmax)
from deltakws.graph.delta import (ConstraintViolated, DeltaMatrixSpec, apply_delta, band_sums,
                                  build_delta_block, build_delta_matrix, fold_delta,
                                  project_zero_sum, unfold_delta)
from deltakws.graph.layers import IDENTITY, RELU


def softmax_net(W, b=None, act=IDENTITY):
    W = np.asarray(W, float)
    b = np.zeros(len(W)) if b is None else b
    return ModelGraph([Dense(W, b, act), Softmax()], FlatVector(W.shape[1]))


# ---------------------------------------------------------------- forward


def test_symmetric_softmax():
    np.testing.assert_allclose(graph.forward(softmax_net(np.eye(2)), [0.0, 0.0]), [0.5, 0.5])


def test_dense_arithmetic():
    d = Dense(np.array([[1.0, 2.0], [3.0, 4.0]]), np.zeros(2), IDENTITY)
    np.testing.assert_array_equal(d.apply(np.array([[1.0, 1.0]])), [[3.0, 7.0]])
    p = graph.forward(softmax_net(d.weights), [1.0, 1.0])
    np.testing.assert_allclose(p, np.exp([3, 7]) / np.exp([3, 7]).sum())


def test_three_layer_net_against_straight_line_code():
    rng = np.random.default_rng(0)
    Ws = [rng.normal(size=(8, 6)), rng.normal(size=(5, 8)), rng.normal(size=(3, 5))]
    bs = [rng.normal(size=8), rng.normal(size=5), rng.normal(size=3)]
    acts = [RELU, RELU, IDENTITY]
    m = ModelGraph([Dense(W, b, a) for W, b, a in zip(Ws, bs, acts)] + [Softmax()],
                   FlatVector(6))
    for _ in range(10):
        x = rng.normal(size=6)
        h = list(x)
        for W, b, a in zip(Ws, bs, acts):
            h = [sum(W[r][c] * h[c] for c in range(len(h))) + b[r] for r in range(len(W))]
            if a == RELU:
                h = [max(v, 0.0) for v in h]
        e = np.exp(np.array(h) - max(h))
        np.testing.assert_allclose(graph.forward(m, x), e / e.sum(), atol=1e-6)


def test_forward_shape_mismatch():
    with pytest.raises(graph.ShapeMismatch):
        graph.forward(softmax_net(np.eye(2)), [0.0, 0.0, 0.0])


def test_graph_must_end_in_softmax():
    with pytest.raises(graph.ShapeMismatch):
        ModelGraph([Dense(np.eye(2), np.zeros(2))], FlatVector(2))
    with pytest.raises(graph.ShapeMismatch):
        ModelGraph([Dense(np.eye(3)[:1], np.zeros(1)), Softmax()], FlatVector(3))


def test_shapes_must_compose():
    with pytest.raises(graph.ShapeMismatch):
        ModelGraph([Dense(np.ones((2, 4)), np.zeros(2)), Softmax()], FlatVector(5))


def test_conv_against_loops():
    rng = np.random.default_rng(1)
    k = rng.normal(size=(2, 1, 3, 3))
    b = rng.normal(size=2)
    x = rng.normal(size=(1, 1, 6, 7))
    y = Conv2D(k, b, IDENTITY).apply(x)
    assert y.shape == (1, 2, 4, 5)
    for o in range(2):
        for i in range(4):
            for j in range(5):
                ref = np.sum(x[0, 0, i:i + 3, j:j + 3] * k[o, 0]) + b[o]
                assert y[0, o, i, j] == pytest.approx(ref)


def test_batchnorm():
    bn = BatchNormInference([2.0], [1.0], [3.0], [4.0], epsilon=0.0)
    np.testing.assert_allclose(bn.apply(np.array([[5.0]])), [[3.0]])
    with pytest.raises(ValueError):
        BatchNormInference([1.0], [0.0], [0.0], [0.0])


# ---------------------------------------------------------------- frozen delta


def test_frozen_delta_constant_grid():
    assert np.all(graph.frozen_delta_forward(np.full((4, 6), 3.0)) == 0)


def test_frozen_delta_cancels_band_offsets():
    rng = np.random.default_rng(2)
    g = rng.normal(size=(64, 100))
    offsets = rng.normal(scale=5, size=(64, 1))
    np.testing.assert_allclose(graph.frozen_delta_forward(g + offsets),
                               graph.frozen_delta_forward(g), atol=1e-12)


def test_frozen_delta_equals_delta_lfbe_exactly():
    rng = np.random.default_rng(3)
    for _ in range(20):
        g = rng.normal(size=(64, 100))
        ref = delta_lfbe(FeatureMatrix(g.T, FeatureKind.LFBE, FrameConfig())).values.T
        np.testing.assert_array_equal(graph.frozen_delta_forward(g), ref)


def test_frozen_delta_on_flat_equals_d():
    rng = np.random.default_rng(4)
    spec = DeltaMatrixSpec(5, 3)
    x = rng.normal(size=(2, 15))
    np.testing.assert_allclose(FrozenDelta(bands=3).apply(x), x @ build_delta_matrix(spec).T)


def test_frozen_delta_too_short():
    with pytest.raises(graph.TooShort):
        graph.frozen_delta_forward(np.zeros((3, 1)))


def test_frozen_delta_kernel_is_fixed():
    assert FrozenDelta().kernel == (-1.0, 1.0)
    with pytest.raises(TypeError):
        FrozenDelta(kernel=(1.0, 1.0))


def test_zero_mean_kernel_versus_delta():
    rng = np.random.default_rng(5)
    g = rng.normal(size=(6, 10))
    # entries sum to 0, but each band row does not
    kernel = np.array([[1.0, 2.0, 1.0], [-1.0, -2.0, -1.0]])[None, None]
    conv = Conv2D(kernel, np.zeros(1), IDENTITY)
    base = conv.apply(g[None, None])
    glob = conv.apply((g + 4.0)[None, None])
    per_band = conv.apply((g + np.arange(6)[:, None] ** 2)[None, None])
    np.testing.assert_allclose(glob, base, atol=1e-12)
    assert np.abs(per_band - base).max() > 0.5
    delta = graph.frozen_delta_forward
    np.testing.assert_allclose(delta(g + np.arange(6)[:, None] ** 2), delta(g), atol=1e-12)


# ---------------------------------------------------------------- D, fold, unfold


def test_smallest_block():
    np.testing.assert_array_equal(build_delta_matrix(DeltaMatrixSpec(2, 1)), [[-1, 1]])


def test_block_diagonal_structure():
    D = build_delta_matrix(DeltaMatrixSpec(3, 2))
    blk = [[-1, 1, 0], [0, -1, 1]]
    assert D.shape == (4, 6)
    np.testing.assert_array_equal(D[:2, :3], blk)
    np.testing.assert_array_equal(D[2:, 3:], blk)
    assert np.all(D[:2, 3:] == 0) and np.all(D[2:, :3] == 0)
    np.testing.assert_array_equal(build_delta_block(3), blk)


def test_spec_validation():
    with pytest.raises(ValueError):
        DeltaMatrixSpec(1, 3)


def test_apply_delta_matches_dense():
    rng = np.random.default_rng(6)
    spec = DeltaMatrixSpec(27, 20)
    x = rng.normal(size=(3, 540))
    np.testing.assert_allclose(apply_delta(x, spec), x @ build_delta_matrix(spec).T, atol=1e-12)


def test_fold_single_weight():
    np.testing.assert_array_equal(fold_delta([[1.0]], DeltaMatrixSpec(2, 1)), [[-1, 1]])
    np.testing.assert_array_equal(unfold_delta([[-1.0, 1.0]], DeltaMatrixSpec(2, 1)), [[1.0]])


def test_fold_matches_matrix_product():
    rng = np.random.default_rng(7)
    spec = DeltaMatrixSpec(5, 3)
    W = rng.normal(size=(4, 12))
    np.testing.assert_allclose(fold_delta(W, spec), W @ build_delta_matrix(spec), atol=1e-12)


@pytest.mark.parametrize("n, L", [(5, 3), (27, 20), (100, 8)])
def test_fold_forward_equivalence(n, L):
    rng = np.random.default_rng(n * L)
    spec = DeltaMatrixSpec(n, L)
    W, b = rng.normal(size=(4, spec.out_width)), rng.normal(size=4)
    x = rng.normal(scale=10, size=(5, spec.in_width))
    folded = Dense(fold_delta(W, spec), b, RELU).apply(x)
    explicit = Dense(W, b, RELU).apply(apply_delta(x, spec))
    assert np.abs(folded - explicit).max() < 1e-5


def test_folded_rows_sum_to_zero_per_band():
    rng = np.random.default_rng(8)
    spec = DeltaMatrixSpec(27, 20)
    V = fold_delta(rng.normal(size=(16, spec.out_width)), spec)
    assert np.abs(band_sums(V, spec)).max() < 1e-6


def test_unfold_round_trip():
    rng = np.random.default_rng(9)
    spec = DeltaMatrixSpec(27, 20)
    W = rng.normal(size=(8, spec.out_width))
    assert np.abs(unfold_delta(fold_delta(W, spec), spec) - W).max() < 1e-5
    V = project_zero_sum(rng.normal(size=(8, spec.in_width)), spec)
    assert np.abs(fold_delta(unfold_delta(V, spec), spec) - V).max() < 1e-5


def test_unfold_rejects_violation():
    with pytest.raises(ConstraintViolated):
        unfold_delta([[1.0, 1.0]], DeltaMatrixSpec(2, 1))


def test_fold_shape_error():
    with pytest.raises(graph.ShapeMismatch):
        fold_delta(np.zeros((2, 7)), DeltaMatrixSpec(5, 3))


def test_projection_examples():
    spec = DeltaMatrixSpec(3, 2)
    out = project_zero_sum([[1.0, 1.0, 1.0, 0.0, 3.0, 0.0]], spec)
    np.testing.assert_allclose(out, [[0, 0, 0, -1, 2, -1]])


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 8), st.integers(1, 5), st.integers(1, 4), st.integers(0, 2 ** 31))
def test_projection_properties(n, L, R, seed):
    rng = np.random.default_rng(seed)
    spec = DeltaMatrixSpec(n, L)
    V = rng.normal(size=(R, n * L))
    P = project_zero_sum(V, spec)
    assert np.abs(band_sums(P, spec)).max() < 1e-12
    np.testing.assert_allclose(project_zero_sum(P, spec), P, atol=1e-12)
    # orthogonal: the residual is orthogonal to any constraint-satisfying matrix
    Z = project_zero_sum(rng.normal(size=V.shape), spec)
    assert abs(np.sum((V - P) * Z)) < 1e-9
    # hence no feasible matrix is closer
    assert np.linalg.norm(V - P) <= np.linalg.norm(V - (P + 0.1 * Z)) + 1e-12


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 8), st.integers(1, 5), st.integers(0, 2 ** 31))
def test_factorization_iff_zero_sum(n, L, seed):
    rng = np.random.default_rng(seed)
    spec = DeltaMatrixSpec(n, L)
    good = project_zero_sum(rng.normal(size=(3, n * L)), spec)
    np.testing.assert_allclose(fold_delta(unfold_delta(good, spec), spec), good, atol=1e-10)
    bad = good.copy()
    bad[1, rng.integers(n * L)] += 1.0
    with pytest.raises(ConstraintViolated):
        unfold_delta(bad, spec)


def test_zero_sum_layer_ignores_band_offsets():
    rng = np.random.default_rng(10)
    spec = DeltaMatrixSpec(27, 20)
    V = project_zero_sum(rng.normal(size=(16, 540)), spec)
    x = rng.normal(size=540)
    offsets = np.repeat(rng.normal(scale=20, size=20), 27)
    assert np.abs(V @ (x + offsets) - V @ x).max() < 1e-5


# ---------------------------------------------------------------- presets and I/O


def test_dnn_preset():
    m = graph.build_preset("dnn-6f", seed=0)
    dense = [layer for layer in m.layers if isinstance(layer, Dense)]
    assert len(dense) == 6
    assert m.input_spec == FlatVector(540)
    assert m.n_params() == 221_186
    assert abs(m.n_params() - 222_000) / 222_000 < 0.15


def test_cnn_preset():
    m = graph.build_preset("cnn-5c3f", seed=0)
    assert sum(isinstance(layer, Conv2D) for layer in m.layers) == 5
    assert sum(isinstance(layer, Dense) for layer in m.layers) == 3
    assert m.input_spec == Grid(64, 100)
    assert abs(m.n_params() - 5_600_000) / 5_600_000 < 0.15
    assert m.metadata["smoothing"] == {"type": "ema", "alpha": 0.1}
    x = np.random.default_rng(0).normal(size=(2, 64, 100))
    p = graph.forward_batch(m, x)
    np.testing.assert_allclose(p.sum(axis=1), 1.0)


def test_preset_delta_modes():
    zs = graph.build_dnn(seed=1, delta="zero-sum")
    assert np.abs(band_sums(zs.layers[0].weights, DeltaMatrixSpec(27, 20))).max() < 1e-12
    fd = graph.build_dnn(seed=1, delta="frozen-delta")
    assert isinstance(fd.layers[0], FrozenDelta)
    assert fd.layers[1].weights.shape == (256, 520)
    with pytest.raises(ValueError):
        graph.build_preset("resnet")


def test_frozen_delta_model_folds_to_zero_sum_model():
    fd = graph.build_dnn(seed=2, delta="frozen-delta", hidden=(8,))
    spec = DeltaMatrixSpec(27, 20)
    V = fold_delta(fd.layers[1].weights, spec)
    folded = ModelGraph([Dense(V, fd.layers[1].bias, RELU)] + fd.layers[2:], FlatVector(540))
    x = np.random.default_rng(0).normal(size=(4, 540))
    np.testing.assert_allclose(graph.forward_batch(folded, x), graph.forward_batch(fd, x),
                               atol=1e-10)


@pytest.mark.parametrize("name, delta", [("dnn-6f", "none"), ("dnn-6f", "frozen-delta"),
                                         ("cnn-5c3f", "frozen-delta")])
def test_model_round_trip(tmp_path, name, delta):
    m = graph.build_preset(name, seed=3, delta=delta)
    m.layers.insert(-1, BatchNormInference([1.5, 0.5], [0.1, -0.1], [0.0, 1.0], [2.0, 3.0]))
    path = tmp_path / "m.json"
    graph.save_model(m, path)
    back = graph.load_model(path)
    assert back.metadata == m.metadata
    x = np.random.default_rng(1).normal(size=(3,) + m.input_spec.shape)
    np.testing.assert_array_equal(graph.forward_batch(back, x), graph.forward_batch(m, x))


def test_load_rejects_bad_documents(tmp_path):
    path = tmp_path / "m.json"
    graph.save_model(softmax_net(np.eye(2)), path)
    doc = json.loads(path.read_text())
    doc["version"] = 99
    path.write_text(json.dumps(doc))
    with pytest.raises(graph.VersionMismatch):
        graph.load_model(path)
    path.write_text("{not json")
    with pytest.raises(graph.Malformed):
        graph.load_model(path)
