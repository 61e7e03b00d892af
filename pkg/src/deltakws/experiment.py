"""Glue for the toy experiment: training sets, batch spotting, sweep scoring."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .audio import read_wav
from .decode import PeakConfig, smoothing_from_dict
from .evaluate import POSITIVE, det_curve
from .graph.presets import DELTA_FROZEN, DELTA_NONE, DELTA_ZERO_SUM, build_dnn
from .spotter import buffer_inputs, get_feature_preset, spot
from .train import FirstLayerMode, TrainConfig, train

log = logging.getLogger(__name__)

MODE_TO_DELTA = {
    FirstLayerMode.BASELINE: DELTA_NONE,
    FirstLayerMode.FROZEN_DELTA: DELTA_FROZEN,
    FirstLayerMode.ZERO_SUM: DELTA_ZERO_SUM,
}


def training_examples(corpus, preset, stride=4):
    """Stacked inputs and frame labels for every ``stride``-th step.

    A step is a wake-word example when its receptive field fully contains
    the keyword.
    """
    xs, ys = [], []
    ctx = preset.context_frames
    for lab in sorted(corpus.labels, key=lambda s: s.stream_id):
        x = buffer_inputs(corpus.streams[lab.stream_id], preset)
        end = np.arange(len(x)) + ctx - 1
        y = np.zeros(len(x), dtype=np.int64)
        if lab.label == POSITIVE:
            k0, k1 = lab.keyword_steps
            y[(end >= k1) & (end <= k0 + ctx - 1)] = 1
        keep = slice(0, None, stride)
        xs.append(x[keep])
        ys.append(y[keep])
    return np.concatenate(xs), np.concatenate(ys)


def input_normalization(X):
    """Scalar offset and scale; scalars keep per-band offsets uniform."""
    return float(X.mean()), 1.0 / float(X.std())


def train_spotter(corpus, mode, section, seed, preset_name="dnn-6f", smoothing=None):
    """Train a fresh DNN preset in the given first-layer mode."""
    mode = FirstLayerMode(mode)
    preset = get_feature_preset(preset_name)
    if preset.grid:
        raise ValueError("only the dense preset can be trained")
    X, y = training_examples(corpus, preset, section.step_stride)
    offset, scale = input_normalization(X)
    model = build_dnn(seed=section.model_seed, delta=MODE_TO_DELTA[mode],
                      bands=preset.bands, frames=preset.stack.n, preset=preset_name)
    cfg = TrainConfig(learning_rate=section.learning_rate, dropout_prob=section.dropout_prob,
                      epochs=section.epochs, batch_size=section.batch_size, seed=seed,
                      first_layer_mode=mode, bands=preset.bands,
                      input_offset=offset, input_scale=scale)
    log.info("training %s on %d examples (%d positive)", mode.value, len(X), int(y.sum()))
    trained, history = train(model, (X, y), cfg)
    if smoothing is not None:
        trained.metadata["smoothing"] = dict(smoothing)
    return trained, history


def spot_streams(model, streams: dict, peak: PeakConfig, smoothing=None, jobs=1) -> dict:
    ids = sorted(streams)

    def run(sid):
        return spot(model, streams[sid], peak, smoothing).detections

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            results = list(pool.map(run, ids))
    else:
        results = [run(sid) for sid in ids]
    return dict(zip(ids, results))


def wav_streams(directory) -> dict:
    return {p.stem: read_wav(p) for p in sorted(Path(directory).glob("*.wav"))}


def sweep_curves(detections_by_condition: dict, labels) -> dict:
    return {cond: det_curve(dets, labels) for cond, dets in detections_by_condition.items()}


def smoothing_for(model, override=None):
    if override is not None:
        return smoothing_from_dict(override)
    return smoothing_from_dict(model.metadata.get("smoothing", {"type": "wma", "window": 30}))
