import math

import numpy as np
import pytest

from deltakws import audio, simgen
from deltakws.evaluate import NEGATIVE, POSITIVE
from deltakws.simgen import CorpusSpec, SplitMix64, SweepSpec


def test_splitmix_reference_outputs():
    # published outputs of the reference SplitMix64 for seed 0
    out = SplitMix64(0).next_u64(3)
    assert [int(v) for v in out] == [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]


def test_splitmix_chunking_is_seamless():
    a = SplitMix64(7)
    first = np.concatenate([a.next_u64(3), a.next_u64(5)])
    np.testing.assert_array_equal(first, SplitMix64(7).next_u64(8))


def test_uniform_and_normal_moments():
    rng = SplitMix64(1)
    u = rng.uniform(100_000)
    assert u.min() >= 0 and u.max() < 1
    assert abs(u.mean() - 0.5) < 0.01
    z = rng.normal(100_001)
    assert len(z) == 100_001
    assert abs(z.mean()) < 0.02 and abs(z.std() - 1) < 0.02


def test_integer_range():
    rng = SplitMix64(2)
    vals = {rng.integer(3, 5) for _ in range(200)}
    assert vals == {3, 4, 5}


def test_derive_seed_distinguishes_keys():
    seeds = {simgen.derive_seed(42, a, b) for a in range(5) for b in range(5)}
    assert len(seeds) == 25
    assert simgen.derive_seed(42, 1, 2) == simgen.derive_seed(42, 1, 2)


@pytest.fixture(scope="module")
def small():
    return simgen.synth_corpus(CorpusSpec(seed=42, n_positive=4, n_negative=4, name="t"))


def test_corpus_deterministic(small, tmp_path):
    again = simgen.synth_corpus(CorpusSpec(seed=42, n_positive=4, n_negative=4, name="t"))
    assert again == small
    a = simgen.write_corpus(small, tmp_path / "a")
    b = simgen.write_corpus(again, tmp_path / "b")
    for f in sorted(a.iterdir()):
        assert f.read_bytes() == (b / f.name).read_bytes()
    other = simgen.synth_corpus(CorpusSpec(seed=43, n_positive=4, n_negative=4, name="t"))
    assert other != small


def test_corpus_layout(small):
    assert sorted(small.streams) == [f"neg_{i:04d}" for i in range(4)] + [f"pos_{i:04d}" for i in range(4)]
    for lab in small.labels:
        buf = small.streams[lab.stream_id]
        assert len(buf) == 48000
        assert lab.duration_seconds == 3.0
        if lab.label == POSITIVE:
            k0, k1 = lab.keyword_steps
            assert lab.interval == (k0, k1 + 100)
            assert (k1 - k0) in (44, 45)  # 450 ms of keyword at a 10 ms hop
            assert k0 >= 100 and (k1 + 1) * 160 <= 48000 - 0.65 * 16000 + 160
        else:
            assert lab.label == NEGATIVE and lab.interval is None


def test_keyword_tones_show_in_spectrum(small):
    lab = next(x for x in small.labels if x.label == POSITIVE)
    x = small.streams[lab.stream_id].samples.astype(float)
    k0 = lab.keyword_steps[0]
    seg = 2400  # 150 ms
    for i, f in enumerate((600.0, 1200.0, 800.0)):
        # centre 1024 samples of segment i
        start = k0 * 160 + i * seg + (seg - 1024) // 2 + 160
        p = np.abs(np.fft.rfft(x[start:start + 1024] * np.hanning(1024))) ** 2
        freqs = np.fft.rfftfreq(1024, 1 / 16000)
        assert abs(freqs[p.argmax()] - f) <= 16000 / 1024


def test_keyword_is_inside_interval(small):
    # the loud part of the signal sits within the labeled keyword frames
    for lab in small.labels:
        if lab.label != POSITIVE:
            continue
        x = np.abs(small.streams[lab.stream_id].samples.astype(float))
        loud = np.flatnonzero(x > 8000)
        k0, k1 = lab.keyword_steps
        assert loud.min() >= k0 * 160 and loud.max() <= (k1 + 1) * 160


def test_corpus_read_back(small, tmp_path):
    d = simgen.write_corpus(small, tmp_path / "t")
    assert simgen.read_corpus(d) == small


def test_spec_validation():
    with pytest.raises(ValueError):
        CorpusSpec(n_positive=0)
    with pytest.raises(ValueError):
        CorpusSpec(stream_seconds=1.5)
    with pytest.raises(ValueError):
        SweepSpec(gains_db=(3,))
    with pytest.raises(ValueError):
        SweepSpec(gains_db=(18,))
    with pytest.raises(ValueError):
        SweepSpec(variants=("reverb",))


def test_sweep_layout_and_exactness(small, tmp_path):
    spec = SweepSpec(variants=simgen.VARIANTS)
    written = simgen.build_sweep(small, spec, tmp_path)
    hdrc = sorted(k for k in written if k[0] == "hdrc")
    assert hdrc == [("hdrc", g) for g in (-12, -6, 0, 6, 12)]
    assert {k for k in written if k[0] != "hdrc"} == {(v, 0) for v in simgen.VARIANTS[1:]}
    assert written[("hdrc", -12)] == tmp_path / "t" / "hdrc" / "-12"
    for d in written.values():
        assert len(list(d.glob("*.wav"))) == 8
        assert (d / "labels.json").read_text() == (written[("hdrc", 0)] / "labels.json").read_text()
    for sid, buf in small.streams.items():
        zero = audio.read_wav(written[("hdrc", 0)] / f"{sid}.wav")
        assert zero == audio.hdrc(buf, 2)
        for g in (-12, -6, 6, 12):
            k = g // 6
            v = audio.read_wav(written[("hdrc", g)] / f"{sid}.wav")
            np.testing.assert_array_equal(v.samples.astype(int), zero.samples.astype(int) * 2 ** k)
            assert audio.shift_gain(v, -k) == zero
        assert audio.read_wav(written[("original", 0)] / f"{sid}.wav") == buf
        assert audio.read_wav(written[("clip_only", 0)] / f"{sid}.wav") == audio.clip(buf, 2)
        assert audio.read_wav(written[("quantize_only", 0)] / f"{sid}.wav") == audio.quantize(buf, 2)


def test_non_hdrc_variants_only_at_unit_gain(small):
    buf = next(iter(small.streams.values()))
    with pytest.raises(ValueError):
        simgen.sweep_variant(buf, "clip_only", 6)


def test_full_scale_power():
    assert simgen.full_scale_power_db() == pytest.approx(20 * math.log10(32767))
    assert abs(simgen.full_scale_power_db() - 90.3) < 0.05
