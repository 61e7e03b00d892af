"""FRR / FAR scoring, DET curves, operating points and score correlation.

Hit protocol: a positive stream is detected when at least one detection
scoring at or above the threshold lands inside its labeled step interval.
Every other passing detection is a false alarm, including out-of-interval
detections on positive streams. FAR is reported per hour of negative
audio alongside the raw count.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

POSITIVE = "positive"
NEGATIVE = "negative"


class EvalError(Exception):
    pass


class MissingLabel(EvalError):
    pass


class Unattainable(EvalError):
    pass


class DegenerateVariance(EvalError):
    pass


@dataclass(frozen=True)
class LabeledStream:
    stream_id: str
    label: str
    duration_seconds: float
    interval: tuple | None = None  # inclusive (first_step, last_step) for positives
    keyword_steps: tuple | None = None

    def __post_init__(self):
        if self.label not in (POSITIVE, NEGATIVE):
            raise ValueError(f"label must be {POSITIVE!r} or {NEGATIVE!r}")
        if self.label == POSITIVE:
            if self.interval is None or self.interval[1] < self.interval[0]:
                raise ValueError(f"{self.stream_id}: positive stream needs a nonempty interval")

    def to_dict(self) -> dict:
        doc = {"stream": self.stream_id, "label": self.label,
               "interval_steps": list(self.interval) if self.interval else None,
               "duration_seconds": self.duration_seconds}
        if self.keyword_steps is not None:
            doc["keyword_steps"] = list(self.keyword_steps)
        return doc

    @classmethod
    def from_dict(cls, doc):
        iv = doc.get("interval_steps")
        kw = doc.get("keyword_steps")
        return cls(doc["stream"], doc["label"], float(doc["duration_seconds"]),
                   tuple(iv) if iv else None, tuple(kw) if kw else None)


@dataclass(frozen=True)
class Score:
    frr: float
    fa_count: int
    far_per_hour: float
    misses: int = 0
    positives: int = 0


@dataclass(frozen=True)
class DetPoint:
    threshold: float
    far_per_hour: float
    frr: float
    fa_count: int


@dataclass
class DetCurve:
    points: list  # DetPoint, ascending threshold
    operating_point: float | None = None

    @property
    def thresholds(self):
        return np.array([p.threshold for p in self.points])

    def at(self, threshold: float) -> DetPoint:
        """The curve's value at an arbitrary threshold.

        Counts only change at observed scores, so the value at ``t`` is the
        value at the smallest grid threshold ``>= t``.
        """
        ts = self.thresholds
        i = int(np.searchsorted(ts, threshold, side="left"))
        return self.points[min(i, len(self.points) - 1)]


def _label_map(labels):
    if isinstance(labels, dict):
        return labels
    return {lab.stream_id: lab for lab in labels}


def score_streams(detections: dict, labels, threshold: float) -> Score:
    """FRR and false alarms at one threshold.

    ``detections`` maps stream id to a list of :class:`Detection`; streams
    without detections may be omitted.
    """
    labels = _label_map(labels)
    missing = set(detections) - set(labels)
    if missing:
        raise MissingLabel(f"no label for streams {sorted(missing)[:5]}")
    positives = misses = fa = 0
    negative_seconds = 0.0
    for sid, lab in labels.items():
        passing = [d for d in detections.get(sid, ()) if d.score >= threshold]
        if lab.label == POSITIVE:
            positives += 1
            lo, hi = lab.interval
            inside = [d for d in passing if lo <= d.step <= hi]
            if not inside:
                misses += 1
            fa += len(passing) - len(inside)
        else:
            negative_seconds += lab.duration_seconds
            fa += len(passing)
    frr = misses / positives if positives else 0.0
    if negative_seconds > 0:
        rate = fa * 3600.0 / negative_seconds
    else:
        rate = 0.0 if fa == 0 else math.inf
    return Score(frr, fa, rate, misses, positives)


def det_curve(detections: dict, labels) -> DetCurve:
    """Sweep the threshold over every observed score plus 0 and 1.

    Equivalent to calling :func:`score_streams` at each grid threshold, but
    computed from sorted score lists in one pass.
    """
    labels = _label_map(labels)
    missing = set(detections) - set(labels)
    if missing:
        raise MissingLabel(f"no label for streams {sorted(missing)[:5]}")
    alarms = []  # scores that count as false alarms once they pass
    best_hit = []  # per positive stream: best in-interval score
    negative_seconds = 0.0
    for sid, lab in labels.items():
        dets = detections.get(sid, ())
        if lab.label == POSITIVE:
            lo, hi = lab.interval
            inside = [d.score for d in dets if lo <= d.step <= hi]
            alarms += [d.score for d in dets if not lo <= d.step <= hi]
            best_hit.append(max(inside) if inside else -math.inf)
        else:
            negative_seconds += lab.duration_seconds
            alarms += [d.score for d in dets]
    alarms = np.sort(np.array(alarms, dtype=np.float64))
    best_hit = np.sort(np.array(best_hit, dtype=np.float64))
    grid = np.array(sorted({d.score for ds in detections.values() for d in ds} | {0.0, 1.0}))

    fa = len(alarms) - np.searchsorted(alarms, grid, side="left")
    misses = np.searchsorted(best_hit, grid, side="left")
    frr = misses / len(best_hit) if len(best_hit) else np.zeros(len(grid))
    if negative_seconds > 0:
        rate = fa * 3600.0 / negative_seconds
    else:
        rate = np.where(fa == 0, 0.0, math.inf)
    points = [DetPoint(float(t), float(r), float(f), int(c))
              for t, r, f, c in zip(grid, rate, frr, fa)]
    for a, b in zip(points, points[1:]):
        if b.frr < a.frr or b.far_per_hour > a.far_per_hour:
            raise EvalError("DET curve is not monotone")
    return DetCurve(points)


def select_operating_point(curve: DetCurve, target_far: float, *, use_counts=False) -> float:
    """Smallest threshold whose FAR is within ``target_far``.

    FAR is per hour by default, or the raw false-alarm count with
    ``use_counts``. Ties go to the lower FRR.
    """
    if not curve.points:
        raise Unattainable("empty curve")
    ok = [p for p in curve.points
          if (p.fa_count if use_counts else p.far_per_hour) <= target_far]
    if not ok:
        raise Unattainable(f"no threshold reaches FAR <= {target_far}")
    best = min(ok, key=lambda p: (p.threshold, p.frr))
    curve.operating_point = best.threshold
    return best.threshold


def pearson(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or len(a) < 2:
        raise ValueError("need two equal-length sequences of at least 2 values")
    da, db = a - a.mean(), b - b.mean()
    sa, sb = np.sqrt(np.dot(da, da)), np.sqrt(np.dot(db, db))
    if sa == 0 or sb == 0:
        raise DegenerateVariance("one of the score lists is constant")
    return float(np.clip(np.dot(da, db) / (sa * sb), -1.0, 1.0))


def paired_scores(reference: dict, other: dict):
    """Decoding scores of two runs over the same streams, aligned for correlation.

    When every stream has the same number of detections in both runs the
    detections are paired in order; otherwise each stream contributes its
    best score (0 when it has none).
    """
    ids = sorted(set(reference) | set(other))
    if all(len(reference.get(s, ())) == len(other.get(s, ())) for s in ids):
        a = [d.score for s in ids for d in reference.get(s, ())]
        b = [d.score for s in ids for d in other.get(s, ())]
    else:
        a = [max((d.score for d in reference.get(s, ())), default=0.0) for s in ids]
        b = [max((d.score for d in other.get(s, ())), default=0.0) for s in ids]
    return np.array(a), np.array(b)


@dataclass(frozen=True)
class OpShiftRow:
    gain_db: int
    far_per_hour: float
    frr: float
    fa_count: int
    rel_far: float
    rel_frr: float


def _relative(x, ref):
    if ref == 0:
        return 0.0 if x == 0 else math.inf
    return (x - ref) / ref


def op_shift_report(curves: dict, base_op: float, reference_gain=0) -> list[OpShiftRow]:
    """FAR/FRR of every gain condition at a fixed threshold, relative to the
    reference condition."""
    if reference_gain not in curves:
        raise EvalError(f"no curve for the reference gain {reference_gain}")
    ref = curves[reference_gain].at(base_op)
    rows = []
    for gain in sorted(curves):
        p = curves[gain].at(base_op)
        rows.append(OpShiftRow(int(gain), p.far_per_hour, p.frr, p.fa_count,
                               _relative(p.far_per_hour, ref.far_per_hour),
                               _relative(p.frr, ref.frr)))
    return rows


# --------------------------------------------------------------------------
# file formats


def write_labels_json(labels, path) -> None:
    docs = [lab.to_dict() for lab in sorted(labels, key=lambda x: x.stream_id)]
    Path(path).write_text(json.dumps(docs, indent=1) + "\n")


def read_labels_json(path) -> list[LabeledStream]:
    return [LabeledStream.from_dict(d) for d in json.loads(Path(path).read_text())]


def write_det_csv(curve: DetCurve, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["threshold", "far_per_hour", "frr"])
        for p in curve.points:
            w.writerow([f"{p.threshold:.9f}", f"{p.far_per_hour:.6f}", f"{p.frr:.6f}"])


def write_op_shift_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["gain_db", "far_per_hour", "frr", "fa_count", "rel_far", "rel_frr"])
        for r in rows:
            w.writerow([r.gain_db, f"{r.far_per_hour:.6f}", f"{r.frr:.6f}", r.fa_count,
                        f"{r.rel_far:.6f}", f"{r.rel_frr:.6f}"])
