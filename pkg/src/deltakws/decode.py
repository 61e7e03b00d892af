"""Posterior smoothing and thresholded peak picking."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter


@dataclass(frozen=True)
class WMA:
    window: int = 30

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("WMA window must be >= 1")


@dataclass(frozen=True)
class EMA:
    alpha: float = 0.1

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError("EMA alpha must lie in (0, 1]")


@dataclass(frozen=True)
class PeakConfig:
    threshold: float = 0.5
    lockout: int = 30  # steps; 300 ms at a 10 ms hop

    def __post_init__(self):
        if not 0 <= self.threshold <= 1:
            raise ValueError("threshold must lie in [0, 1]")
        if self.lockout < 1:
            raise ValueError("lockout must be >= 1")


@dataclass(frozen=True)
class Detection:
    step: int
    score: float


def smoothing_from_dict(doc: dict):
    kind = doc.get("type")
    if kind == "wma":
        return WMA(int(doc["window"]))
    if kind == "ema":
        return EMA(float(doc["alpha"]))
    raise ValueError(f"unknown smoothing spec {doc!r}")


def smoothing_to_dict(spec) -> dict:
    if isinstance(spec, WMA):
        return {"type": "wma", "window": spec.window}
    return {"type": "ema", "alpha": spec.alpha}


def smooth_wma(trace, window: int) -> np.ndarray:
    """Trailing moving average; the first ``window - 1`` steps average what exists."""
    if window < 1:
        raise ValueError("window must be >= 1")
    x = np.asarray(trace, dtype=np.float64)
    if x.size == 0:
        return x.copy()
    sums = np.convolve(x, np.ones(window))[:len(x)]
    counts = np.minimum(np.arange(1, len(x) + 1), window)
    return sums / counts


def smooth_ema(trace, alpha: float) -> np.ndarray:
    """Causal EMA seeded with the first value."""
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    x = np.asarray(trace, dtype=np.float64)
    if x.size == 0:
        return x.copy()
    y, _ = lfilter([alpha], [1.0, alpha - 1.0], x, zi=[(1.0 - alpha) * x[0]])
    return y


def smooth(trace, spec) -> np.ndarray:
    if isinstance(spec, WMA):
        return smooth_wma(trace, spec.window)
    if isinstance(spec, EMA):
        return smooth_ema(trace, spec.alpha)
    raise TypeError(f"unknown smoothing spec {spec!r}")


def detect_peaks(trace, cfg: PeakConfig) -> list[Detection]:
    """Local maxima at or above threshold, taken greedily left to right.

    A step is a local maximum when it is ``>=`` its left neighbour and
    ``>`` its right neighbour, so a flat top fires on its last step.
    A candidate is skipped if it falls within ``lockout`` steps of the
    previous detection.
    """
    x = np.asarray(trace, dtype=np.float64)
    if x.size == 0:
        return []
    left = np.concatenate(([True], x[1:] >= x[:-1]))
    right = np.concatenate((x[:-1] > x[1:], [True]))
    candidates = np.flatnonzero(left & right & (x >= cfg.threshold))
    out = []
    last = None
    for t in candidates:
        if last is None or t - last >= cfg.lockout:
            out.append(Detection(int(t), float(x[t])))
            last = t
    return out


DETECTION_HEADER = ["stream_id", "step", "time_seconds", "score"]


def write_detections_csv(rows, path, step_seconds=0.01) -> None:
    """``rows`` is an iterable of ``(stream_id, Detection)``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DETECTION_HEADER)
        for stream_id, det in rows:
            w.writerow([stream_id, det.step, f"{det.step * step_seconds:.2f}",
                        f"{det.score:.9f}"])


def read_detections_csv(path) -> dict[str, list[Detection]]:
    out: dict[str, list[Detection]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != DETECTION_HEADER:
            raise ValueError(f"{path}: expected header {DETECTION_HEADER}, got {header}")
        for row in reader:
            if not row:
                continue
            out.setdefault(row[0], []).append(Detection(int(row[1]), float(row[3])))
    return out
