"""Framing, power spectra, Mel filterbanks, LFBE / delta-LFBE and stacking."""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .audio import AudioBuffer

LOG_FLOOR = 1e-10


class FeatureError(Exception):
    pass


class TooShort(FeatureError):
    pass


class InvalidRange(FeatureError):
    pass


class WindowFn(enum.Enum):
    HANN = "hann"
    RECTANGULAR = "rectangular"


class FeatureKind(enum.Enum):
    LFBE = "lfbe"
    DELTA_LFBE = "delta_lfbe"


@dataclass(frozen=True)
class FrameConfig:
    sample_rate: int = 16000
    window_len: int = 400
    hop: int = 160
    fft_size: int = 512
    window_fn: WindowFn = WindowFn.HANN
    normalize: bool = False  # divide samples by 32768 before analysis

    def __post_init__(self):
        if self.hop < 1:
            raise ValueError("hop must be >= 1")
        if self.window_len > self.fft_size:
            raise ValueError("window_len must not exceed fft_size")
        if self.fft_size < 1 or self.fft_size & (self.fft_size - 1):
            raise ValueError("fft_size must be a power of two")

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1

    def window(self) -> np.ndarray:
        if self.window_fn is WindowFn.RECTANGULAR:
            return np.ones(self.window_len)
        # periodic Hann
        n = np.arange(self.window_len)
        return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / self.window_len)

    def n_frames(self, n_samples: int) -> int:
        if n_samples < self.window_len:
            return 0
        return 1 + (n_samples - self.window_len) // self.hop


@dataclass(frozen=True, eq=False)
class MelFilterbank:
    weights: np.ndarray  # (L, n_bins)
    f_min: float
    f_max: float

    @property
    def band_count(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    values: np.ndarray  # (T, L)
    kind: FeatureKind
    frame_config: FrameConfig

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]

    @property
    def n_bands(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class StackSpec:
    """Sliding context of ``context_frames`` frames sampled every ``downsample``."""

    context_frames: int = 80
    downsample: int = 3
    bands: int = 20

    def __post_init__(self):
        if self.context_frames < 1 or self.downsample < 1 or self.bands < 1:
            raise ValueError("StackSpec fields must be positive")

    @property
    def n(self) -> int:
        """Frames per band in a stacked vector."""
        return (self.context_frames + self.downsample - 1) // self.downsample

    @property
    def width(self) -> int:
        return self.n * self.bands


# --------------------------------------------------------------------------


def frame_signal(buf, cfg: FrameConfig) -> np.ndarray:
    """Split into overlapping frames, shape ``(T, window_len)``, no padding."""
    x = buf.samples if isinstance(buf, AudioBuffer) else np.asarray(buf)
    if len(x) < cfg.window_len:
        raise TooShort(f"need at least {cfg.window_len} samples, got {len(x)}")
    x = x.astype(np.float64)
    if cfg.normalize:
        x = x / 32768.0
    return sliding_window_view(x, cfg.window_len)[::cfg.hop].copy()


def power_spectrum(frame, cfg: FrameConfig) -> np.ndarray:
    """One-sided ``|DFT(window * frame)|**2`` over ``fft_size/2 + 1`` bins.

    Accepts a single frame or a stack of frames along the first axis.
    """
    frame = np.asarray(frame, dtype=np.float64)
    if frame.shape[-1] != cfg.window_len:
        raise ValueError(f"frame length {frame.shape[-1]} != {cfg.window_len}")
    spec = np.fft.rfft(frame * cfg.window(), n=cfg.fft_size)
    return spec.real ** 2 + spec.imag ** 2


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def build_mel_filterbank(cfg: FrameConfig, L: int = 20, f_min: float = 0.0,
                         f_max: float | None = None) -> MelFilterbank:
    """Triangular filters with peak 1, centers uniform on the mel scale."""
    if f_max is None:
        f_max = cfg.sample_rate / 2
    if not 0 <= f_min < f_max <= cfg.sample_rate / 2:
        raise InvalidRange(f"need 0 <= f_min < f_max <= {cfg.sample_rate / 2}, "
                           f"got ({f_min}, {f_max})")
    if L < 2:
        raise InvalidRange("need at least 2 bands")
    edges = mel_to_hz(np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), L + 2))
    freqs = np.arange(cfg.n_bins) * cfg.sample_rate / cfg.fft_size
    left, center, right = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rise = (freqs - left) / (center - left)
    fall = (right - freqs) / (right - center)
    weights = np.maximum(0.0, np.minimum(rise, fall))
    empty = np.flatnonzero(weights.max(axis=1) <= 0)
    if empty.size:
        raise InvalidRange(f"bands {empty.tolist()} cover no FFT bin; "
                           "use fewer bands or a larger fft_size")
    return MelFilterbank(weights, float(f_min), float(f_max))


def band_energies(buf, cfg: FrameConfig, fb: MelFilterbank) -> np.ndarray:
    return power_spectrum(frame_signal(buf, cfg), cfg) @ fb.weights.T


def lfbe(buf, cfg: FrameConfig, fb: MelFilterbank) -> FeatureMatrix:
    """Log Mel-filterbank energies, natural log, floored at ``LOG_FLOOR``."""
    energies = band_energies(buf, cfg, fb)
    values = np.log(np.maximum(energies, LOG_FLOOR))
    return FeatureMatrix(values, FeatureKind.LFBE, cfg)


def delta_lfbe(feat: FeatureMatrix) -> FeatureMatrix:
    """Difference of consecutive frames: ``out[t] = feat[t+1] - feat[t]``."""
    if feat.kind is not FeatureKind.LFBE:
        raise ValueError("delta_lfbe expects an LFBE matrix")
    if feat.n_frames < 2:
        raise TooShort("need at least 2 frames")
    v = feat.values
    return FeatureMatrix(v[1:] - v[:-1], FeatureKind.DELTA_LFBE, feat.frame_config)


def stack_frames(feat, spec: StackSpec) -> np.ndarray:
    """Band-major stacked context vectors, one row per decodable step.

    Row ``t`` holds ``feat[t + downsample*j][i]`` at index ``i*n + j``.
    """
    values = feat.values if isinstance(feat, FeatureMatrix) else np.asarray(feat)
    T, L = values.shape
    if L != spec.bands:
        raise ValueError(f"feature has {L} bands, spec expects {spec.bands}")
    if T < spec.context_frames:
        raise TooShort(f"need at least {spec.context_frames} frames, got {T}")
    steps = T - spec.context_frames + 1
    # windows: (steps, L, context_frames)
    windows = sliding_window_view(values, spec.context_frames, axis=0)[:steps]
    picked = windows[:, :, ::spec.downsample][:, :, :spec.n]
    return np.ascontiguousarray(picked).reshape(steps, L * spec.n)


def write_feature_csv(feat: FeatureMatrix, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"band_{i}" for i in range(feat.n_bands)])
        for row in feat.values:
            w.writerow([f"{v:.9g}" for v in row])


def read_feature_csv(path, kind=FeatureKind.LFBE, cfg=None) -> FeatureMatrix:
    rows = Path(path).read_text().splitlines()
    if not rows or not rows[0].startswith("band_0"):
        raise ValueError(f"{path}: missing feature CSV header")
    n_bands = len(rows[0].split(","))
    values = np.array([[float(v) for v in r.split(",")] for r in rows[1:]],
                      dtype=np.float64).reshape(-1, n_bands)
    return FeatureMatrix(values, kind, cfg or FrameConfig())
