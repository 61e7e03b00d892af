"""Deterministic synthetic keyword corpus and gain-sweep test sets.

Random numbers come from SplitMix64 (Steele, Lea & Flood 2014), chosen
because it is tiny and easy to re-implement bit-exactly anywhere:

    state += 0x9E3779B97F4A7C15            (mod 2**64)
    z = state
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    out = z ^ (z >> 31)

Uniforms are ``(out >> 11) * 2**-53``. Normals use Box-Muller on
consecutive uniform pairs ``(u1, u2)``: ``sqrt(-2 ln(1 - u1)) * cos(2 pi u2)``
then the matching ``sin`` term. Each stream draws from its own generator
seeded by :func:`derive_seed`, so streams can be regenerated individually.
"""

from __future__ import annotations

import logging
import math
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio import AudioBuffer, SAMPLE_RATE, clip, db_to_bit_shift, hdrc, quantize, read_wav, shift_gain, write_wav
from .evaluate import NEGATIVE, POSITIVE, LabeledStream, read_labels_json, write_labels_json

log = logging.getLogger(__name__)

GAMMA = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB
MASK64 = (1 << 64) - 1
FULL_SCALE = 32767.0
HOP = 160

VARIANTS = ("hdrc", "quantize_only", "clip_only", "original")


def _mix(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * np.uint64(MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(MIX2)
    return z ^ (z >> np.uint64(31))


def derive_seed(seed: int, *keys: int) -> int:
    """Fold integer keys into a seed, one SplitMix64 step per key."""
    s = seed & MASK64
    for k in keys:
        s = (s + ((k + 1) * GAMMA)) & MASK64
        s = int(_mix(np.array([s], dtype=np.uint64))[0])
    return s


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self, n: int) -> np.ndarray:
        steps = np.arange(1, n + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = np.uint64(self.state) + steps * np.uint64(GAMMA)
        self.state = (self.state + n * GAMMA) & MASK64
        return _mix(z)

    def uniform(self, n: int) -> np.ndarray:
        return (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * 2.0 ** -53

    def normal(self, n: int) -> np.ndarray:
        m = (n + 1) // 2
        u = self.uniform(2 * m)
        r = np.sqrt(-2.0 * np.log(1.0 - u[0::2]))
        theta = 2.0 * np.pi * u[1::2]
        out = np.empty(2 * m)
        out[0::2] = r * np.cos(theta)
        out[1::2] = r * np.sin(theta)
        return out[:n]

    def integer(self, low: int, high: int) -> int:
        """Uniform integer in ``[low, high]``."""
        return low + int(self.uniform(1)[0] * (high - low + 1))


@dataclass(frozen=True)
class CorpusSpec:
    seed: int = 42
    n_positive: int = 10
    n_negative: int = 10
    name: str = "train"
    stream_seconds: float = 3.0
    keyword_freqs: tuple = (600.0, 1200.0, 800.0)
    distractor_freqs: tuple = (900.0, 900.0)
    segment_ms: float = 150.0
    ramp_ms: float = 10.0
    noise_dbfs: float = -30.0  # RMS of the white-noise floor
    keyword_dbfs: float = -12.0  # peak tone amplitude, before HDRC
    distractor_prob: float = 0.5
    lead_seconds: float = 1.0  # earliest keyword onset
    tail_seconds: float = 0.65  # minimum audio left after the keyword
    hit_tail_steps: int = 100  # hit window extends this far past the keyword

    def __post_init__(self):
        if self.n_positive < 1 or self.n_negative < 1:
            raise ValueError("need at least one positive and one negative stream")
        span = len(self.keyword_freqs) * self.segment_ms / 1000.0
        if self.lead_seconds + span + self.tail_seconds > self.stream_seconds:
            raise ValueError("stream too short to contain the keyword with margins")


@dataclass(frozen=True)
class SweepSpec:
    gains_db: tuple = (-12, -6, 0, 6, 12)
    b: int = 2
    variants: tuple = ("hdrc",)

    def __post_init__(self):
        for g in self.gains_db:
            if int(g) != g or int(g) % 6:
                raise ValueError(f"gain {g} dB is not a whole number of 6 dB bit shifts")
            if abs(db_to_bit_shift(g)) > self.b:
                raise ValueError(f"gain {g} dB needs more than b={self.b} bit shifts")
        for v in self.variants:
            if v not in VARIANTS:
                raise ValueError(f"unknown variant {v!r}")


@dataclass
class Corpus:
    name: str
    streams: dict  # stream id -> AudioBuffer
    labels: list = field(default_factory=list)

    def __eq__(self, other):
        return (isinstance(other, Corpus) and self.name == other.name
                and _by_id(self.labels) == _by_id(other.labels)
                and self.streams.keys() == other.streams.keys()
                and all(self.streams[k] == other.streams[k] for k in self.streams))


def _by_id(labels):
    return sorted(labels, key=lambda lab: lab.stream_id)


def tone_pattern(freqs, segment_ms, ramp_ms, amplitude, rng: SplitMix64) -> np.ndarray:
    """Concatenated sine segments with raised-cosine ramps and random phase."""
    seg = int(round(segment_ms * SAMPLE_RATE / 1000.0))
    ramp = int(round(ramp_ms * SAMPLE_RATE / 1000.0))
    env = np.ones(seg)
    if ramp:
        rise = 0.5 - 0.5 * np.cos(np.pi * np.arange(ramp) / ramp)
        env[:ramp] = rise
        env[-ramp:] = rise[::-1]
    t = np.arange(seg) / SAMPLE_RATE
    phases = 2.0 * np.pi * rng.uniform(len(freqs))
    return np.concatenate([amplitude * env * np.sin(2.0 * np.pi * f * t + ph)
                           for f, ph in zip(freqs, phases)])


def _to_int16(x: np.ndarray) -> np.ndarray:
    y = np.sign(x) * np.floor(np.abs(x) + 0.5)
    return np.clip(y, -32768, 32767).astype(np.int16)


def _place(rng, n_total, n_event, spec):
    first = int(round(spec.lead_seconds * SAMPLE_RATE))
    last = n_total - n_event - int(round(spec.tail_seconds * SAMPLE_RATE))
    return rng.integer(first, max(first, last))


def synth_stream(spec: CorpusSpec, label: str, index: int):
    """One stream and its label record."""
    kind = 0 if label == POSITIVE else 1
    rng = SplitMix64(derive_seed(spec.seed, zlib.crc32(spec.name.encode()), kind, index))
    n = int(round(spec.stream_seconds * SAMPLE_RATE))
    x = FULL_SCALE * 10.0 ** (spec.noise_dbfs / 20.0) * rng.normal(n)
    amp = FULL_SCALE * 10.0 ** (spec.keyword_dbfs / 20.0)
    sid = f"{'pos' if kind == 0 else 'neg'}_{index:04d}"
    duration = n / SAMPLE_RATE
    if label == POSITIVE:
        pattern = tone_pattern(spec.keyword_freqs, spec.segment_ms, spec.ramp_ms, amp, rng)
        onset = _place(rng, n, len(pattern), spec)
        x[onset:onset + len(pattern)] += pattern
        k0, k1 = onset // HOP, (onset + len(pattern) - 1) // HOP
        lab = LabeledStream(sid, POSITIVE, duration, (k0, k1 + spec.hit_tail_steps), (k0, k1))
    else:
        if rng.uniform(1)[0] < spec.distractor_prob:
            pattern = tone_pattern(spec.distractor_freqs, spec.segment_ms, spec.ramp_ms, amp, rng)
            onset = _place(rng, n, len(pattern), spec)
            x[onset:onset + len(pattern)] += pattern
        lab = LabeledStream(sid, NEGATIVE, duration)
    return sid, AudioBuffer(_to_int16(x)), lab


def synth_corpus(spec: CorpusSpec) -> Corpus:
    streams, labels = {}, []
    for label, count in ((POSITIVE, spec.n_positive), (NEGATIVE, spec.n_negative)):
        for i in range(count):
            sid, buf, lab = synth_stream(spec, label, i)
            streams[sid] = buf
            labels.append(lab)
    return Corpus(spec.name, streams, labels)


def write_corpus(corpus: Corpus, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for sid in sorted(corpus.streams):
        write_wav(corpus.streams[sid], d / f"{sid}.wav")
    write_labels_json(corpus.labels, d / "labels.json")
    return d


def read_corpus(directory, name=None) -> Corpus:
    d = Path(directory)
    labels = read_labels_json(d / "labels.json")
    streams = {lab.stream_id: read_wav(d / f"{lab.stream_id}.wav") for lab in labels}
    return Corpus(name or d.name, streams, labels)


def sweep_variant(buf: AudioBuffer, variant: str, gain_db: int, b: int = 2) -> AudioBuffer:
    if variant == "hdrc":
        return shift_gain(hdrc(buf, b), db_to_bit_shift(gain_db))
    if gain_db != 0:
        raise ValueError(f"variant {variant!r} is only defined at 0 dB")
    if variant == "quantize_only":
        return quantize(buf, b)
    if variant == "clip_only":
        return clip(buf, b)
    if variant == "original":
        return buf
    raise ValueError(f"unknown variant {variant!r}")


def sweep_conditions(spec: SweepSpec):
    """``(variant, gain)`` pairs; only ``hdrc`` is swept over gains."""
    out = []
    for v in spec.variants:
        gains = spec.gains_db if v == "hdrc" else (0,)
        out += [(v, int(g)) for g in gains]
    return out


def build_sweep(corpus: Corpus, spec: SweepSpec, out_dir) -> dict:
    """Write ``<out_dir>/<set>/<variant>/<gain_db>/`` test sets.

    Returns a map from ``(variant, gain_db)`` to the directory written.
    """
    root = Path(out_dir) / corpus.name
    written = {}
    for variant, gain in sweep_conditions(spec):
        d = root / variant / str(gain)
        d.mkdir(parents=True, exist_ok=True)
        for sid in sorted(corpus.streams):
            write_wav(sweep_variant(corpus.streams[sid], variant, gain, spec.b), d / f"{sid}.wav")
        write_labels_json(corpus.labels, d / "labels.json")
        written[(variant, gain)] = d
        log.info("wrote %s (%d streams)", d, len(corpus.streams))
    return written


def full_scale_power_db(amplitude: float = FULL_SCALE) -> float:
    return 10.0 * math.log10(amplitude ** 2)
