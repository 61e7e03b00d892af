import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deltakws import audio
from deltakws.audio import AudioBuffer

ALL_INT16 = np.arange(-32768, 32768, dtype=np.int64)


def buf(values):
    return AudioBuffer(np.asarray(values, dtype=np.int16))


def wav_with(samples, rate=16000, channels=1, bits=16, code=1, extra=b""):
    payload = np.asarray(samples, dtype="<i2").tobytes()
    fmt = struct.pack("<HHIIHH", code, channels, rate, rate * channels * bits // 8,
                      channels * bits // 8, bits)
    body = b"WAVE" + b"fmt " + struct.pack("<I", 16) + fmt + extra
    body += b"data" + struct.pack("<I", len(payload)) + payload
    return b"RIFF" + struct.pack("<I", len(body)) + body


# ---------------------------------------------------------------- WAV I/O


def test_read_four_samples(tmp_path):
    p = tmp_path / "a.wav"
    p.write_bytes(wav_with([0, 1, -1, 32767]))
    assert audio.read_wav(p).samples.tolist() == [0, 1, -1, 32767]


def test_read_rejects_other_rates(tmp_path):
    p = tmp_path / "a.wav"
    p.write_bytes(wav_with([0, 1], rate=8000))
    with pytest.raises(audio.UnsupportedFormat):
        audio.read_wav(p)


@pytest.mark.parametrize("kwargs", [{"channels": 2}, {"bits": 8}, {"code": 3}])
def test_read_rejects_unsupported_layouts(tmp_path, kwargs):
    p = tmp_path / "a.wav"
    p.write_bytes(wav_with([0, 0], **kwargs))
    with pytest.raises(audio.UnsupportedFormat):
        audio.read_wav(p)


def test_read_rejects_garbage(tmp_path):
    p = tmp_path / "a.wav"
    p.write_bytes(b"not a wave file at all")
    with pytest.raises(audio.Malformed):
        audio.read_wav(p)


def test_read_skips_unknown_chunks(tmp_path):
    p = tmp_path / "a.wav"
    p.write_bytes(wav_with([5, -5], extra=b"LIST" + struct.pack("<I", 3) + b"abc\x00"))
    assert audio.read_wav(p).samples.tolist() == [5, -5]


def test_empty_buffer_is_header_only(tmp_path):
    p = tmp_path / "e.wav"
    audio.write_wav(buf([]), p)
    assert p.stat().st_size == 44
    assert len(audio.read_wav(p)) == 0


def test_little_endian_payload():
    assert audio.wav_bytes(buf([0, 256]))[44:] == bytes([0, 0, 0, 1])


def test_canonical_files_round_trip_bytewise(tmp_path):
    rng = np.random.default_rng(3)
    for i in range(5):
        src = tmp_path / f"{i}.wav"
        src.write_bytes(wav_with(rng.integers(-32768, 32768, 1000 + i)))
        out = tmp_path / f"{i}_copy.wav"
        audio.write_wav(audio.read_wav(src), out)
        assert out.read_bytes() == src.read_bytes()


def test_buffer_is_immutable():
    b = buf([1, 2, 3])
    with pytest.raises(ValueError):
        b.samples[0] = 7


def test_buffer_rejects_out_of_range():
    with pytest.raises(ValueError):
        AudioBuffer(np.array([40000]))


# ---------------------------------------------------------------- gain


def test_shift_doubles():
    assert audio.shift_gain(buf([100, -100]), 1).samples.tolist() == [200, -200]


def test_shift_saturates():
    assert audio.shift_gain(buf([30000]), 1).samples.tolist() == [32767]
    assert audio.shift_gain(buf([-30000]), 2).samples.tolist() == [-32768]


def test_right_shift_floors():
    assert audio.shift_gain(buf([-1, 5, -5]), -1).samples.tolist() == [-1, 2, -3]


def test_shift_round_trip_exhaustive():
    # values with two zero LSBs and magnitude below 2**13
    x = ALL_INT16[(ALL_INT16 % 4 == 0) & (np.abs(ALL_INT16) < 2 ** 13)]
    b = buf(x)
    assert audio.shift_gain(audio.shift_gain(b, -2), 2) == b
    assert audio.shift_gain(audio.shift_gain(b, 2), -2) == b


def test_shift_limit():
    with pytest.raises(ValueError):
        audio.shift_gain(buf([1]), 8)


def test_scale_gain_db():
    b = buf([123, -77, 0])
    assert audio.scale_gain_db(b, 0.0) == b
    assert audio.scale_gain_db(buf([1000]), 6.0206).samples.tolist() == [2000]
    assert audio.scale_gain_db(buf([-20000]), 12.0412).samples.tolist() == [-32768]


def test_scale_gain_rounds_half_away_from_zero():
    # factor 0.5 exactly: 3 -> 1.5 -> 2, -3 -> -2
    gain = 20 * np.log10(0.5)
    assert audio.scale_gain_db(buf([3, -3, 1, -1]), gain).samples.tolist() == [2, -2, 1, -1]


def test_db_to_bit_shift():
    assert [audio.db_to_bit_shift(g) for g in (-12, -6, 0, 6, 12)] == [-2, -1, 0, 1, 2]


# ---------------------------------------------------------------- HDRC


def test_quantize_vectors():
    assert audio.quantize(buf([32767]), 2).samples.tolist() == [32764]
    assert audio.quantize(buf([-1]), 2).samples.tolist() == [-4]


def test_clip_vectors():
    assert audio.clip(buf([9000, -9000, 100]), 2).samples.tolist() == [8191, -8192, 100]


def test_hdrc_clips_before_quantizing():
    assert audio.hdrc(buf([32767]), 2).samples.tolist() == [8188]
    assert audio.hdrc(buf([0]), 2).samples.tolist() == [0]


def test_hdrc_exhaustive_properties():
    h = audio.hdrc(buf(ALL_INT16), 2)
    assert audio.hdrc(h, 2) == h
    s = h.samples.astype(np.int64)
    assert np.all(s % 4 == 0)
    assert s.min() >= -8192 and s.max() <= 8188
    for k in (1, 2):
        assert audio.shift_gain(audio.shift_gain(h, k), -k) == h
        assert audio.shift_gain(audio.shift_gain(h, -k), k) == h


def test_quantize_clip_match_arithmetic_definitions():
    b = buf(ALL_INT16)
    np.testing.assert_array_equal(audio.quantize(b, 2).samples,
                                  (ALL_INT16 + 32768) // 4 * 4 - 32768)
    np.testing.assert_array_equal(audio.clip(b, 2).samples, np.clip(ALL_INT16, -8192, 8191))


def test_bit_depth_params_validation():
    with pytest.raises(ValueError):
        audio.BitDepthParams(b=8)
    with pytest.raises(ValueError):
        audio.BitDepthParams(b=2, B=16)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(-32768, 32767), min_size=1, max_size=64), st.integers(0, 4))
def test_hdrc_survives_b_shifts(values, b):
    h = audio.hdrc(buf(values), b)
    for k in range(-b, b + 1):
        assert audio.shift_gain(audio.shift_gain(h, k), -k) == h
