"""16-bit PCM audio buffers, WAV I/O and bit-exact gain transforms.

All transforms are pure: they return a new :class:`AudioBuffer` and never
touch the input. Sample arithmetic is done in int32 and saturated back to
the int16 range.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SAMPLE_RATE = 16000
INT16_MIN = -32768
INT16_MAX = 32767
MAX_BITS = 15  # magnitude bits of a signed 16-bit word
MAX_RESERVED_BITS = 7
MAX_SHIFT = 7

_HEADER = struct.Struct("<4sI4s4sIHHIIHH4sI")


class AudioError(Exception):
    pass


class UnsupportedFormat(AudioError):
    """The WAV file is valid RIFF but not 16-bit mono 16 kHz PCM."""


class Malformed(AudioError):
    """The file is not a well-formed RIFF/WAVE container."""


@dataclass(frozen=True, eq=False)
class AudioBuffer:
    """Immutable mono 16-bit PCM signal."""

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        s = np.asarray(self.samples)
        if s.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if s.dtype != np.int16:
            if s.size and (s.min() < INT16_MIN or s.max() > INT16_MAX):
                raise ValueError("samples outside the int16 range")
            if s.size and not np.issubdtype(s.dtype, np.integer):
                if not np.all(s == np.round(s)):
                    raise ValueError("samples must be integers")
            s = s.astype(np.int16)
        else:
            s = s.copy()
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)
        if self.sample_rate != SAMPLE_RATE:
            raise UnsupportedFormat(
                f"sample rate must be {SAMPLE_RATE} Hz, got {self.sample_rate}")

    def __len__(self):
        return len(self.samples)

    def __eq__(self, other):
        if not isinstance(other, AudioBuffer):
            return NotImplemented
        return (self.sample_rate == other.sample_rate
                and np.array_equal(self.samples, other.samples))

    __hash__ = None

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class BitDepthParams:
    """Reserved-bit count ``b`` and magnitude width ``B`` for HDRC."""

    b: int = 2
    B: int = field(default=MAX_BITS)

    def __post_init__(self):
        if self.B != MAX_BITS:
            raise ValueError(f"B must be {MAX_BITS}")
        if not 0 <= self.b <= MAX_RESERVED_BITS:
            raise ValueError(f"b must lie in [0, {MAX_RESERVED_BITS}], got {self.b}")


def _params(b) -> BitDepthParams:
    return b if isinstance(b, BitDepthParams) else BitDepthParams(int(b))


def _saturate(x: np.ndarray) -> np.ndarray:
    return np.clip(x, INT16_MIN, INT16_MAX).astype(np.int16)


# --------------------------------------------------------------------------
# WAV I/O


def read_wav(path) -> AudioBuffer:
    """Read a RIFF/WAVE file holding 16-bit mono 16 kHz PCM.

    Chunks other than ``fmt `` and ``data`` are skipped wherever they
    appear.
    """
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise Malformed(f"{path}: not a RIFF/WAVE file")
    pos = 12
    fmt = None
    payload = None
    while pos + 8 <= len(data):
        cid = data[pos:pos + 4]
        size = struct.unpack_from("<I", data, pos + 4)[0]
        body = data[pos + 8:pos + 8 + size]
        if len(body) < size:
            raise Malformed(f"{path}: truncated {cid!r} chunk")
        if cid == b"fmt ":
            if size < 16:
                raise Malformed(f"{path}: fmt chunk too short")
            fmt = struct.unpack_from("<HHIIHH", body)
        elif cid == b"data":
            if fmt is None:
                raise Malformed(f"{path}: data chunk before fmt chunk")
            payload = body
            break
        pos += 8 + size + (size & 1)
    if fmt is None or payload is None:
        raise Malformed(f"{path}: missing fmt or data chunk")

    code, channels, rate, _, _, bits = fmt
    if code != 1:
        raise UnsupportedFormat(f"{path}: format code {code}, expected PCM (1)")
    if bits != 16:
        raise UnsupportedFormat(f"{path}: {bits}-bit samples, expected 16")
    if channels != 1:
        raise UnsupportedFormat(f"{path}: {channels} channels, expected mono")
    if rate != SAMPLE_RATE:
        raise UnsupportedFormat(f"{path}: {rate} Hz, expected {SAMPLE_RATE}")
    if len(payload) % 2:
        raise Malformed(f"{path}: odd-sized 16-bit payload")
    return AudioBuffer(np.frombuffer(payload, dtype="<i2").astype(np.int16))


def wav_bytes(buf: AudioBuffer) -> bytes:
    payload = buf.samples.astype("<i2").tobytes()
    header = _HEADER.pack(
        b"RIFF", 36 + len(payload), b"WAVE",
        b"fmt ", 16, 1, 1, SAMPLE_RATE, SAMPLE_RATE * 2, 2, 16,
        b"data", len(payload))
    return header + payload


def write_wav(buf: AudioBuffer, path) -> None:
    """Write ``buf`` with the canonical 44-byte PCM header."""
    Path(path).write_bytes(wav_bytes(buf))


# --------------------------------------------------------------------------
# Gain


def shift_gain(buf: AudioBuffer, k: int) -> AudioBuffer:
    """Scale by ``2**k`` using bit shifts.

    Positive ``k`` multiplies with saturation; negative ``k`` is an
    arithmetic right shift (floor division). Each step is about 6.02 dB.
    """
    k = int(k)
    if abs(k) > MAX_SHIFT:
        raise ValueError(f"|k| must be <= {MAX_SHIFT}, got {k}")
    x = buf.samples.astype(np.int32)
    if k >= 0:
        return AudioBuffer(_saturate(x << k))
    return AudioBuffer((x >> -k).astype(np.int16))


def scale_gain_db(buf: AudioBuffer, gain_db: float) -> AudioBuffer:
    """Multiply by ``10**(gain_db/20)``, round half away from zero, saturate."""
    if not np.isfinite(gain_db):
        raise ValueError("gain_db must be finite")
    y = buf.samples.astype(np.float64) * 10.0 ** (gain_db / 20.0)
    y = np.sign(y) * np.floor(np.abs(y) + 0.5)
    return AudioBuffer(_saturate(y))


def db_to_bit_shift(gain_db: float) -> int:
    """Map a gain in dB to the nearest whole number of bit shifts."""
    return int(round(gain_db / (20.0 * np.log10(2.0))))


# --------------------------------------------------------------------------
# Dynamic-range reduction


def quantize(buf: AudioBuffer, b=2) -> AudioBuffer:
    """Zero the ``b`` least-significant bits (two's complement, floors negatives)."""
    p = _params(b)
    mask = np.int16(~((1 << p.b) - 1))
    return AudioBuffer(np.bitwise_and(buf.samples, mask))


def clip(buf: AudioBuffer, b=2) -> AudioBuffer:
    """Saturate to ``[-2**(B-b), 2**(B-b) - 1]``."""
    p = _params(b)
    rail = 1 << (p.B - p.b)
    return AudioBuffer(np.clip(buf.samples, -rail, rail - 1))


def hdrc(buf: AudioBuffer, b=2) -> AudioBuffer:
    """Hard dynamic range compression: clip to ``B-b`` bits, then zero ``b`` LSBs.

    The output survives any shift of up to ``b`` bits in either direction
    without clipping or truncation.
    """
    return quantize(clip(buf, b), b)
