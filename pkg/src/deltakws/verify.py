"""Acceptance suite behind ``deltakws verify``.

Each ``check_*`` function returns a JSON-ready verdict dict. Wall-clock
timings are returned separately so the verdict document stays
byte-identical between runs.
"""

from __future__ import annotations

import json
import logging
import math
import tempfile
import time
from pathlib import Path

import numpy as np

from . import audio
from .config import RunConfig
from .decode import read_detections_csv
from .evaluate import (det_curve, op_shift_report, pearson, read_labels_json,
                       select_operating_point)
from .features import (FeatureKind, FeatureMatrix, FrameConfig, band_energies,
                       build_mel_filterbank, delta_lfbe, lfbe, power_spectrum)
from .graph.delta import (ConstraintViolated, DeltaMatrixSpec, apply_delta, band_sums,
                          fold_delta, unfold_delta)
from .graph.layers import (IDENTITY, RELU, Dense, FlatVector, FrozenDelta, ModelGraph, Softmax,
                           forward_batch, frozen_delta_forward)
from .graph.presets import build_dnn, he_dense
from .train import TrainConfig, loss_and_grads, train

log = logging.getLogger(__name__)

LN2 = math.log(2.0)
SHIFTS = (-2, -1, 0, 1, 2)  # bit shifts for -12..+12 dB


def _verdict(cid, name, passed, **metrics):
    return {"id": cid, "name": name, "passed": bool(passed),
            "metrics": {k: _clean(v) for k, v in metrics.items()}}


def _clean(v):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    return v


def random_hdrc_buffers(seed, count=50, seconds=1.0):
    rng = np.random.default_rng(seed)
    n = int(seconds * audio.SAMPLE_RATE)
    return [audio.hdrc(audio.AudioBuffer(rng.integers(-32768, 32768, n, dtype=np.int16)), 2)
            for _ in range(count)]


# --------------------------------------------------------------------------


def check_lfbe_shift(buffers):
    cfg = FrameConfig()
    fb = build_mel_filterbank(cfg, 20)
    worst = 0.0
    checked = 0
    for buf in buffers:
        energy = band_energies(buf, cfg, fb)
        base = lfbe(buf, cfg, fb).values
        up = lfbe(audio.shift_gain(buf, 1), cfg, fb).values
        mask = energy > 1e-6
        worst = max(worst, float(np.abs((up - base - 2 * LN2)[mask]).max()))
        checked += int(mask.sum())
    return _verdict("1", "LFBE shift by 2 ln 2 under a one-bit gain", worst < 1e-5,
                    max_abs_error=worst, tolerance=1e-5, values_checked=checked)


def check_delta_invariance(buffers):
    cfg = FrameConfig()
    fb = build_mel_filterbank(cfg, 20)
    worst = 0.0
    for buf in buffers:
        ref = delta_lfbe(lfbe(buf, cfg, fb)).values
        for k in SHIFTS:
            d = delta_lfbe(lfbe(audio.shift_gain(buf, k), cfg, fb)).values
            worst = max(worst, float(np.abs(d - ref).max()))
    return _verdict("2", "delta-LFBE invariance over -12..+12 dB bit shifts", worst < 1e-5,
                    max_abs_deviation=worst, tolerance=1e-5, gains_db=[6 * k for k in SHIFTS])


def check_fold(seed, trials=100, n=27, L=20, R=16):
    rng = np.random.default_rng(seed)
    spec = DeltaMatrixSpec(n, L)
    fwd = rowsum = roundtrip = 0.0
    for _ in range(trials):
        W = rng.normal(size=(R, spec.out_width))
        b = rng.normal(size=R)
        x = rng.normal(scale=10.0, size=spec.in_width)
        V = fold_delta(W, spec)
        folded = Dense(V, b, IDENTITY).apply(x[None])[0]
        explicit = Dense(W, b, IDENTITY).apply(apply_delta(x, spec)[None])[0]
        fwd = max(fwd, float(np.abs(folded - explicit).max()))
        rowsum = max(rowsum, float(np.abs(band_sums(V, spec)).max()))
        roundtrip = max(roundtrip, float(np.abs(unfold_delta(V, spec) - W).max()))
    bad = fold_delta(rng.normal(size=(R, spec.out_width)), spec)
    bad[0, 0] += 1.0
    try:
        unfold_delta(bad, spec)
        rejected = False
    except ConstraintViolated:
        rejected = True
    ok = fwd < 1e-5 and rowsum < 1e-6 and roundtrip < 1e-5 and rejected
    return _verdict("3", "fold equivalence, zero-sum rows, unfold round trip", ok,
                    max_forward_diff=fwd, max_band_row_sum=rowsum, max_roundtrip_diff=roundtrip,
                    violating_matrix_rejected=rejected)


def check_delta_layer(seed, trials=100):
    rng = np.random.default_rng(seed)
    worst = 0.0
    exact = True
    layer = FrozenDelta()
    for _ in range(trials):
        grid = rng.normal(scale=5.0, size=(64, 100))
        oracle = delta_lfbe(FeatureMatrix(grid.T.copy(), FeatureKind.LFBE, FrameConfig())).values.T
        for out in (frozen_delta_forward(grid), layer.apply(grid[None])[0]):
            exact &= bool(np.array_equal(out, oracle))
            worst = max(worst, float(np.abs(out - oracle).max()))
    return _verdict("4", "FrozenDelta forward equals delta_lfbe on 64x100 grids",
                    exact or worst < 1e-7, bit_exact=exact, max_abs_diff=worst)


def check_hdrc_bits():
    x = np.arange(-32768, 32768, dtype=np.int64)
    buf = audio.AudioBuffer(x.astype(np.int16))
    h = audio.hdrc(buf, 2)
    idempotent = h == audio.hdrc(h, 2)
    roundtrip = all(
        audio.shift_gain(audio.shift_gain(h, k), -k) == h for k in (1, 2)
    ) and all(audio.shift_gain(audio.shift_gain(h, -k), k) == h for k in (1, 2))
    # bit-level definitions via integer arithmetic, not masks
    q_oracle = (x + 32768) // 4 * 4 - 32768
    c_oracle = np.minimum(np.maximum(x, -8192), 8191)
    quant_ok = bool(np.array_equal(audio.quantize(buf, 2).samples, q_oracle))
    clip_ok = bool(np.array_equal(audio.clip(buf, 2).samples, c_oracle))
    ok = idempotent and roundtrip and quant_ok and clip_ok
    return _verdict("5", "HDRC bit identities over all 65536 int16 values", ok,
                    hdrc_idempotent=idempotent, shift_roundtrip_identity=roundtrip,
                    quantize_matches_definition=quant_ok, clip_matches_definition=clip_ok)


def naive_power_spectrum(frame, cfg: FrameConfig):
    xw = np.zeros(cfg.fft_size)
    xw[:cfg.window_len] = np.asarray(frame, dtype=np.float64) * cfg.window()
    k = np.arange(cfg.n_bins)[:, None]
    n = np.arange(cfg.fft_size)[None, :]
    angle = 2.0 * np.pi * ((k * n) % cfg.fft_size) / cfg.fft_size
    re = (np.cos(angle) * xw).sum(axis=1)
    im = -(np.sin(angle) * xw).sum(axis=1)
    return re * re + im * im


def check_dft(seed, frames=20):
    cfg = FrameConfig()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(frames):
        frame = rng.integers(-8192, 8192, cfg.window_len).astype(np.float64)
        fast = power_spectrum(frame, cfg)
        slow = naive_power_spectrum(frame, cfg)
        worst = max(worst, float((np.abs(fast - slow) / np.maximum(np.abs(slow), 1e-300)).max()))
    return _verdict("6", "power spectrum vs naive DFT", worst < 1e-6,
                    max_relative_error=worst, tolerance=1e-6)


def finite_difference_grads(model, X, y, h=1e-4):
    """Central differences of the mean loss for every dense weight and bias."""
    grads = []
    for layer in model.layers:
        if not isinstance(layer, Dense):
            continue
        for arr in (layer.weights, layer.bias):
            g = np.zeros_like(arr)
            flat, gflat = arr.reshape(-1), g.reshape(-1)
            for i in range(flat.size):
                old = flat[i]
                flat[i] = old + h
                lp = _loss(model, X, y)
                flat[i] = old - h
                lm = _loss(model, X, y)
                flat[i] = old
                gflat[i] = (lp - lm) / (2 * h)
            grads.append(g)
    return grads


def _loss(model, X, y):
    p = forward_batch(model, X)
    return float(-np.log(np.maximum(p[np.arange(len(y)), y], 1e-12)).mean())


def gradient_relative_error(analytic, numeric):
    """Largest elementwise ``|a - n| / max(|a|, |n|)`` over entries whose
    gradient is not negligible (above 1e-6 of the array's largest)."""
    worst = 0.0
    for a, n in zip(analytic, numeric):
        scale = max(np.abs(a).max(), np.abs(n).max())
        denom = np.maximum(np.abs(a), np.abs(n))
        keep = denom > 1e-6 * scale
        if keep.any():
            worst = max(worst, float((np.abs(a - n)[keep] / denom[keep]).max()))
    return worst


def check_gradients(seed):
    rng = np.random.default_rng(seed)
    model = ModelGraph([he_dense(rng, 540, 32, RELU), he_dense(rng, 32, 2, IDENTITY), Softmax()],
                       FlatVector(540))
    for layer in model.layers[:2]:
        layer.bias = rng.normal(scale=0.1, size=layer.bias.shape)
    X = rng.normal(size=(8, 540))
    y = rng.integers(0, 2, 8)
    _, analytic = loss_and_grads(model, X, y)
    numeric = finite_difference_grads(model, X, y, 1e-4)
    err = gradient_relative_error(analytic, numeric)
    return _verdict("7", "analytic vs central-difference gradients (540-32-2)", err < 1e-3,
                    max_relative_error=err, tolerance=1e-3, step=1e-4)


def _toy_dataset(seed, n=200, bands=20, frames=27):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, bands * frames))
    y = rng.integers(0, 2, n)
    # class 1 gets a rising ramp in the first band block
    X[y == 1, :frames] += np.linspace(-1, 1, frames)
    return X, y


def check_constraint_training(seed, epochs=50):
    X, y = _toy_dataset(seed)
    spec = DeltaMatrixSpec(27, 20)
    worst = [0.0]

    def watch(stats, params):
        worst[0] = max(worst[0], float(np.abs(band_sums(params[0], spec)).max()))

    model = build_dnn(seed, "zero-sum", hidden=(16,))
    cfg = TrainConfig(epochs=epochs, batch_size=32, seed=seed, first_layer_mode="zero-sum")
    trained, hist = train(model, (X, y), cfg, on_epoch=watch)
    final = float(np.abs(band_sums(trained.layers[0].weights, spec)).max())

    dmodel = build_dnn(seed, "frozen-delta", hidden=(16,))
    before = dmodel.layers[0]
    kernel_before = tuple(before.kernel)
    probe = np.random.default_rng(seed + 1).normal(size=(4, 540))
    out_before = before.apply(probe)
    dtrained, _ = train(dmodel, (X, y), TrainConfig(epochs=epochs, batch_size=32, seed=seed,
                                                    first_layer_mode="frozen-delta"))
    after = dtrained.layers[0]
    frozen_ok = (tuple(after.kernel) == kernel_before == (-1.0, 1.0)
                 and np.array_equal(after.apply(probe), out_before))
    ok = worst[0] < 1e-5 and final < 1e-5 and frozen_ok
    return _verdict("8", "zero-sum maintained in training; frozen delta untouched", ok,
                    epochs=epochs, max_band_row_sum_any_epoch=worst[0],
                    max_band_row_sum_final=final, frozen_delta_bit_identical=frozen_ok,
                    final_loss=hist[-1].mean_loss)


# --------------------------------------------------------------------------
# end-to-end toy experiment


def run_pipeline(cfg: RunConfig, root: Path):
    """synth -> sweep -> train (baseline, zero-sum) -> spot every condition."""
    from .cli import cmd_spot, cmd_sweep, cmd_synth, cmd_train

    corpus_root = root / "corpus"
    cmd_synth(cfg, corpus_root)
    sweep = cmd_sweep(cfg, corpus_root / "test", root / "sweep")
    out = {"sweep": sweep, "models": {}, "detections": {}, "history": {}}
    for mode in ("baseline", "zero-sum"):
        model_path = root / "models" / f"{mode}.json"
        _, history, _ = cmd_train(cfg, corpus_root / "train", model_path, mode)
        out["models"][mode] = model_path
        out["history"][mode] = history
        for (variant, gain), directory in sorted(sweep.items()):
            csv_path = root / "detections" / mode / variant / f"{gain}.csv"
            cmd_spot(model_path, directory, csv_path, cfg.peak, jobs=cfg.jobs)
            out["detections"][(mode, variant, gain)] = csv_path
    out["labels"] = next(iter(sweep.values())) / "labels.json"
    return out


def _flat(dets):
    return [(sid, d.step, d.score) for sid in sorted(dets) for d in dets[sid]]


def check_end_to_end(cfg: RunConfig, pipe, root: Path):
    from .cli import cmd_eval

    labels = read_labels_json(pipe["labels"])
    gains = sorted(cfg.sweep.gains_db)
    det = {k: read_detections_csv(p) for k, p in pipe["detections"].items()}
    metrics = {}

    # (a) both models usable at 0 dB
    part_a = True
    for mode in ("baseline", "zero-sum"):
        curve = det_curve(det[(mode, "hdrc", 0)], labels)
        try:
            op = select_operating_point(curve, cfg.target_fa, use_counts=True)
            p = curve.at(op)
            frr, fa = p.frr, p.fa_count
        except Exception:
            op, frr, fa = None, 1.0, None
        metrics[f"{mode}_op"] = {"threshold": op, "frr": frr, "fa_count": fa}
        part_a &= frr <= 0.10

    # (b) zero-sum detections identical across the sweep
    ref = det[("zero-sum", "hdrc", 0)]
    ref_flat = _flat(ref)
    ref_curve = det_curve(ref, labels)
    op_zs = metrics["zero-sum_op"]["threshold"]
    same_lists = True
    max_score_diff = 0.0
    curves_equal = True
    for g in gains:
        cur = det[("zero-sum", "hdrc", g)]
        flat = _flat(cur)
        if [f[:2] for f in flat] != [f[:2] for f in ref_flat]:
            same_lists = False
        else:
            diffs = [abs(a[2] - b[2]) for a, b in zip(flat, ref_flat)]
            max_score_diff = max([max_score_diff] + diffs)
        c = det_curve(cur, labels)
        curves_equal &= ([(p.far_per_hour, p.frr) for p in c.points]
                         == [(p.far_per_hour, p.frr) for p in ref_curve.points])
    zs_curves = {g: det_curve(det[("zero-sum", "hdrc", g)], labels) for g in gains}
    zs_report = op_shift_report(zs_curves, op_zs) if op_zs is not None else []
    zs_zero = bool(zs_report) and all(r.rel_far == 0 and r.rel_frr == 0 for r in zs_report)
    part_b = same_lists and max_score_diff < 1e-5 and curves_equal and zs_zero
    metrics["zero_sum_identical_lists"] = same_lists
    metrics["zero_sum_max_score_diff"] = max_score_diff
    metrics["zero_sum_det_curves_coincide"] = curves_equal
    metrics["zero_sum_op_shift"] = [[r.gain_db, r.rel_far, r.rel_frr] for r in zs_report]

    # (c) baseline moves at +-12 dB
    op_base = metrics["baseline_op"]["threshold"]
    base_curves = {g: det_curve(det[("baseline", "hdrc", g)], labels) for g in gains}
    base_report = op_shift_report(base_curves, op_base) if op_base is not None else []
    extremes = [r for r in base_report if abs(r.gain_db) == max(abs(g) for g in gains)]
    part_c = any(r.rel_far != 0 or r.rel_frr != 0 for r in extremes)
    metrics["baseline_op_shift"] = [[r.gain_db, r.rel_far, r.rel_frr, r.fa_count, r.frr]
                                    for r in base_report]

    # (d) Pearson of zero-sum decoding scores, +-12 dB against 0 dB
    prs = {}
    for g in (min(gains), max(gains)):
        a = [s for _, _, s in ref_flat]
        b = [s for _, _, s in _flat(det[("zero-sum", "hdrc", g)])]
        try:
            prs[g] = pearson(a, b) if len(a) == len(b) else -1.0
        except Exception:
            prs[g] = float("nan")
    part_d = all(r >= 0.9999 for r in prs.values())
    metrics["zero_sum_pearson"] = prs

    # reports and figures for the record
    for mode in ("baseline", "zero-sum"):
        cmd_eval({str(g): pipe["detections"][(mode, "hdrc", g)] for g in gains},
                 pipe["labels"], root / "reports" / mode, cfg.target_fa)

    metrics["parts"] = {"a": part_a, "b": part_b, "c": part_c, "d": part_d}
    return _verdict("9", "end-to-end toy reproduction of gain (in)sensitivity",
                    part_a and part_b and part_c and part_d, **metrics)


def check_ablation(cfg: RunConfig, pipe, root: Path):
    from .cli import cmd_eval

    labels = read_labels_json(pipe["labels"])
    variants = ("original", "quantize_only", "clip_only", "hdrc")
    curves = {v: det_curve(read_detections_csv(pipe["detections"][("zero-sum", v, 0)]), labels)
              for v in variants}
    grid = sorted({p.threshold for c in curves.values() for p in c.points})
    worst = 0.0
    for t in grid:
        frrs = [curves[v].at(t).frr for v in variants]
        worst = max(worst, max(frrs) - min(frrs))
    cmd_eval({v: pipe["detections"][("zero-sum", v, 0)] for v in variants},
             pipe["labels"], root / "reports" / "ablation", cfg.target_fa, reference="original")
    return _verdict("10", "quantize / clip / HDRC ablation leaves DET curves together",
                    worst < 0.05, max_pointwise_frr_gap=worst, tolerance=0.05,
                    thresholds_compared=len(grid))


# --------------------------------------------------------------------------


def results_json(results) -> str:
    """Canonical serialization of a verdict document."""
    return json.dumps(results, indent=1, sort_keys=True) + "\n"


def run_verification(cfg: RunConfig | None = None, workdir=None):
    """Run criteria 1-10; returns ``(results, timings)``."""
    cfg = cfg or RunConfig()
    seed = cfg.seed
    timings = {}
    criteria = []

    def timed(cid, fn, *args):
        t0 = time.perf_counter()
        verdict = fn(*args)
        timings[cid] = time.perf_counter() - t0
        criteria.append(verdict)
        log.info("criterion %s %s in %.2fs", cid, "passed" if verdict["passed"] else "FAILED",
                 timings[cid])
        return verdict

    buffers = random_hdrc_buffers(seed)
    timed("1", check_lfbe_shift, buffers)
    timed("2", check_delta_invariance, buffers)
    timed("3", check_fold, seed)
    timed("4", check_delta_layer, seed)
    timed("5", check_hdrc_bits)
    timed("6", check_dft, seed)
    timed("7", check_gradients, seed)
    timed("8", check_constraint_training, seed)

    with tempfile.TemporaryDirectory(prefix="deltakws-verify-") as tmp:
        root = Path(workdir) if workdir else Path(tmp)
        t0 = time.perf_counter()
        pipe = run_pipeline(cfg, root)
        timings["pipeline"] = time.perf_counter() - t0
        timed("9", check_end_to_end, cfg, pipe, root)
        timings["9"] += timings["pipeline"]
        timed("10", check_ablation, cfg, pipe, root)

    results = {"seed": seed, "passed": all(c["passed"] for c in criteria),
               "criteria": criteria}
    return results, timings
