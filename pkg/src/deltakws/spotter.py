"""End-to-end spotting: features -> network -> smoothing -> peak picking.

Detection steps are reported in feature frames (10 ms) at the last frame
of the model's receptive field, i.e. the moment the decision becomes
available in a streaming setting.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .decode import PeakConfig, Detection, detect_peaks, smooth, smoothing_from_dict
from .features import FrameConfig, StackSpec, build_mel_filterbank, lfbe, stack_frames
from .graph.layers import ModelGraph, forward_batch


@dataclass(frozen=True)
class FeaturePreset:
    name: str
    bands: int
    stack: StackSpec
    grid: bool  # reshape stacked vectors to bands x frames

    @property
    def context_frames(self) -> int:
        return self.stack.context_frames


FEATURE_PRESETS = {
    "dnn-6f": FeaturePreset("dnn-6f", 20, StackSpec(80, 3, 20), grid=False),
    "cnn-5c3f": FeaturePreset("cnn-5c3f", 64, StackSpec(100, 1, 64), grid=True),
}

FRAME_CONFIG = FrameConfig()


def get_feature_preset(name: str) -> FeaturePreset:
    try:
        return FEATURE_PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown feature preset {name!r}; "
                         f"choose from {sorted(FEATURE_PRESETS)}") from None


@lru_cache(maxsize=None)
def filterbank(bands: int):
    return build_mel_filterbank(FRAME_CONFIG, bands, 0.0, FRAME_CONFIG.sample_rate / 2)


def extract_features(buf, preset: FeaturePreset):
    return lfbe(buf, FRAME_CONFIG, filterbank(preset.bands))


def model_inputs(feat, preset: FeaturePreset) -> np.ndarray:
    """Per-step model inputs; empty when the stream is shorter than the context."""
    if feat.n_frames < preset.context_frames:
        shape = (preset.bands, preset.stack.n) if preset.grid else (preset.stack.width,)
        return np.zeros((0,) + shape)
    x = stack_frames(feat, preset.stack)
    if preset.grid:
        x = x.reshape(len(x), preset.bands, preset.stack.n)
    return x


def buffer_inputs(buf, preset: FeaturePreset) -> np.ndarray:
    if len(buf) < FRAME_CONFIG.window_len:
        return model_inputs(_EmptyFeat(), preset)
    return model_inputs(extract_features(buf, preset), preset)


class _EmptyFeat:
    n_frames = 0


def posterior_trace(model: ModelGraph, buf, preset=None, batch=256) -> np.ndarray:
    preset = preset or get_feature_preset(model.metadata.get("feature_preset", "dnn-6f"))
    x = buffer_inputs(buf, preset)
    cls = int(model.metadata.get("wake_word_class", 1))
    out = [forward_batch(model, x[i:i + batch])[:, cls] for i in range(0, len(x), batch)]
    return np.concatenate(out) if out else np.zeros(0)


@dataclass
class SpotResult:
    trace: np.ndarray
    smoothed: np.ndarray
    detections: list
    step_offset: int


def spot(model: ModelGraph, buf, peak: PeakConfig, smoothing=None, preset=None) -> SpotResult:
    preset = preset or get_feature_preset(model.metadata.get("feature_preset", "dnn-6f"))
    if smoothing is None:
        smoothing = smoothing_from_dict(model.metadata.get("smoothing", {"type": "wma", "window": 30}))
    trace = posterior_trace(model, buf, preset)
    smoothed = smooth(trace, smoothing)
    offset = preset.context_frames - 1
    dets = [Detection(d.step + offset, d.score) for d in detect_peaks(smoothed, peak)]
    return SpotResult(trace, smoothed, dets, offset)
