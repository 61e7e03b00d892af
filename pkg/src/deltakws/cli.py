"""``deltakws`` command line: synth, sweep, featurize, train, spot, eval, fold, verify.

Logs go to stderr; data goes to files (or stdout where noted).
Exit codes: 0 success, 1 verification failed, 2 usage or config error,
3 missing or unusable path, 4 error raised by a pipeline module.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import audio, evaluate, features, graph, train as train_mod
from .config import ConfigError, RunConfig, load_config
from .decode import PeakConfig, read_detections_csv, write_detections_csv
from .evaluate import (det_curve, op_shift_report, paired_scores, pearson, read_labels_json,
                       select_operating_point, write_det_csv, write_op_shift_csv)
from .experiment import smoothing_for, spot_streams, train_spotter, wav_streams
from .graph.delta import DeltaMatrixSpec, fold_delta, max_band_residual, unfold_delta
from .graph.layers import Dense, FrozenDelta
from .simgen import CorpusSpec, build_sweep, read_corpus, synth_corpus, write_corpus
from .spotter import FRAME_CONFIG, extract_features, get_feature_preset

log = logging.getLogger("deltakws")

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2
EXIT_PATH = 3
EXIT_MODULE = 4


class PathError(Exception):
    pass


def _require_dir(path) -> Path:
    p = Path(path)
    if not p.is_dir():
        raise PathError(f"{p} is not a directory")
    return p


def _require_file(path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise PathError(f"{p} does not exist")
    return p


# --------------------------------------------------------------------------
# commands; each takes a RunConfig plus explicit arguments and returns data


def cmd_synth(cfg: RunConfig, out=None) -> dict:
    root = Path(out or cfg.paths.corpus)
    c = cfg.corpus
    written = {}
    for name, npos, nneg in (("train", c.train_positive, c.train_negative),
                             ("test", c.test_positive, c.test_negative)):
        spec = CorpusSpec(seed=cfg.seed, n_positive=npos, n_negative=nneg, name=name,
                          stream_seconds=c.stream_seconds)
        written[name] = write_corpus(synth_corpus(spec), root / name)
        log.info("synth: %s -> %s", name, written[name])
    return written


def cmd_sweep(cfg: RunConfig, corpus_dir=None, out=None) -> dict:
    src = _require_dir(corpus_dir or Path(cfg.paths.corpus) / "test")
    corpus = read_corpus(src)
    return build_sweep(corpus, cfg.sweep, out or cfg.paths.sweep)


def cmd_featurize(in_dir, preset, out_dir) -> list:
    src = _require_dir(in_dir)
    dst = Path(out_dir)
    dst.mkdir(parents=True, exist_ok=True)
    p = get_feature_preset(preset)
    written = []
    for wav in sorted(src.glob("*.wav")):
        feat = extract_features(audio.read_wav(wav), p)
        target = dst / f"{wav.stem}.csv"
        features.write_feature_csv(feat, target)
        written.append(target)
    log.info("featurize: %d files -> %s", len(written), dst)
    return written


def cmd_train(cfg: RunConfig, corpus_dir=None, out=None, mode=None):
    from .plotting import plot_loss

    mode = mode or cfg.train.mode
    src = _require_dir(corpus_dir or Path(cfg.paths.corpus) / "train")
    corpus = read_corpus(src)
    model, history = train_spotter(corpus, mode, cfg.train, seed=cfg.seed,
                                   preset_name=cfg.model_preset, smoothing=cfg.smoothing)
    out = Path(out or Path(cfg.paths.models) / f"{mode}.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    graph.save_model(model, out)
    loss_csv = out.with_suffix(".loss.csv")
    train_mod.write_history_csv(history, loss_csv)
    plot_loss({mode: history}, out.with_suffix(".loss.svg"))
    log.info("train: %s model -> %s", mode, out)
    return model, history, out


def cmd_spot(model_path, in_dir, out, peak: PeakConfig, smoothing=None, jobs=1) -> dict:
    model = graph.load_model(_require_file(model_path))
    streams = wav_streams(_require_dir(in_dir))
    dets = spot_streams(model, streams, peak, smoothing_for(model, smoothing), jobs)
    rows = [(sid, d) for sid in sorted(dets) for d in dets[sid]]
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    write_detections_csv(rows, out, FRAME_CONFIG.hop / FRAME_CONFIG.sample_rate)
    log.info("spot: %d streams, %d detections -> %s", len(streams), len(rows), out)
    return dets


def cmd_eval(det_paths: dict, labels_path, out_dir, target_fa=5.0, reference="0",
             use_counts=True) -> dict:
    """Score detection files; keys of ``det_paths`` name the conditions."""
    from .plotting import plot_det, plot_score_scatter

    labels = read_labels_json(_require_file(labels_path))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dets = {k: read_detections_csv(_require_file(p)) for k, p in det_paths.items()}
    curves = {k: det_curve(d, labels) for k, d in dets.items()}
    ref = reference if reference in curves else next(iter(curves))
    op = select_operating_point(curves[ref], target_fa, use_counts=use_counts)
    summary = {"reference": ref, "operating_point": op, "conditions": {}}
    for k, curve in curves.items():
        write_det_csv(curve, out / f"det_{k}.csv")
        p = curve.at(op)
        entry = {"frr": p.frr, "far_per_hour": p.far_per_hour, "fa_count": p.fa_count}
        if k != ref:
            a, b = paired_scores(dets[ref], dets[k])
            try:
                entry["pearson"] = pearson(a, b)
            except (evaluate.DegenerateVariance, ValueError):
                entry["pearson"] = None
            plot_score_scatter(a, b, out / f"scatter_{k}.svg", label=f"{k}", pr=entry["pearson"])
        summary["conditions"][k] = entry
    try:
        gains = {int(k): c for k, c in curves.items()}
    except ValueError:
        gains = None
    if gains is not None and int(ref) in gains:
        rows = op_shift_report(gains, op, reference_gain=int(ref))
        write_op_shift_csv(rows, out / "op_shift.csv")
        summary["op_shift"] = [r.__dict__ for r in rows]
    plot_det(curves, out / "det.svg", operating_point=op)
    (out / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    log.info("eval: %d conditions, operating point %.6f -> %s", len(curves), op, out)
    return summary


def _fold_spec(model, dense):
    bands = model.metadata.get("bands")
    if not bands:
        raise ConfigError("model metadata lacks 'bands'")
    width = dense.weights.shape[1]
    return int(bands), width


def cmd_fold(model_in, model_out, direction="fold", tol=1e-4) -> float:
    """Fold a leading FrozenDelta into the first dense layer, or undo it.

    Returns the largest per-band row-sum residual of the folded weights.
    """
    model = graph.load_model(_require_file(model_in))
    layers = list(model.layers)
    meta = dict(model.metadata)
    if direction == "fold":
        if not isinstance(layers[0], FrozenDelta) or not isinstance(layers[1], Dense):
            raise graph.GraphError("fold needs FrozenDelta followed by Dense")
        bands = layers[0].bands
        W = layers[1]
        spec = DeltaMatrixSpec(W.weights.shape[1] // bands + 1, bands)
        V = fold_delta(W.weights, spec)
        layers = [Dense(V, W.bias, W.activation)] + layers[2:]
        residual = max_band_residual(V, spec)
        meta["delta"] = "zero-sum"
        spec_in = graph.FlatVector(spec.in_width)
    elif direction == "unfold":
        V = layers[0]
        if not isinstance(V, Dense):
            raise graph.GraphError("unfold needs a leading Dense layer")
        bands, width = _fold_spec(model, V)
        spec = DeltaMatrixSpec(width // bands, bands)
        W = unfold_delta(V.weights, spec, tol)
        residual = max_band_residual(V.weights, spec)
        layers = [FrozenDelta(bands=bands), Dense(W, V.bias, V.activation)] + layers[1:]
        meta["delta"] = "frozen-delta"
        spec_in = model.input_spec
    else:
        raise ConfigError(f"direction must be 'fold' or 'unfold', got {direction!r}")
    graph.save_model(graph.ModelGraph(layers, spec_in, meta), model_out)
    print(f"max per-band row-sum residual: {residual:.3e}")
    return residual


def cmd_verify(cfg: RunConfig, out, workdir=None) -> dict:
    from .verify import results_json, run_verification

    results, timings = run_verification(cfg, workdir)
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    Path(out).write_text(results_json(results))
    for crit in results["criteria"]:
        log.info("criterion %s: %s (%.2fs)", crit["id"], "PASS" if crit["passed"] else "FAIL",
                 timings.get(crit["id"], float("nan")))
    return results


# --------------------------------------------------------------------------


def _parse_det(items):
    out = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"--det expects CONDITION=PATH, got {item!r}")
        k, v = item.split("=", 1)
        out[k] = v
    return out


def build_parser():
    parser = argparse.ArgumentParser(prog="deltakws", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="TOML run configuration")
    parser.add_argument("--seed", type=int, help="override the configured seed")
    parser.add_argument("--jobs", type=int, help="worker threads for per-stream stages")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate the synthetic train/test corpus")
    p.add_argument("--out", help="corpus root (default paths.corpus)")

    p = sub.add_parser("sweep", help="build gain-sweep and ablation test sets")
    p.add_argument("--corpus-dir", help="corpus set to sweep (default paths.corpus/test)")
    p.add_argument("--out", help="sweep root (default paths.sweep)")

    p = sub.add_parser("featurize", help="write LFBE CSVs for every WAV in a directory")
    p.add_argument("in_dir")
    p.add_argument("out_dir")
    p.add_argument("--preset", choices=["dnn-6f", "cnn-5c3f"], default=None)

    p = sub.add_parser("train", help="train a DNN spotter")
    p.add_argument("--mode", choices=["baseline", "frozen-delta", "zero-sum"])
    p.add_argument("--preset", choices=["dnn-6f"], default=None)
    p.add_argument("--epochs", type=int)
    p.add_argument("--corpus-dir")
    p.add_argument("--out", help="model file (default paths.models/<mode>.json)")

    p = sub.add_parser("spot", help="run the spotter over a directory of WAVs")
    p.add_argument("model")
    p.add_argument("in_dir")
    p.add_argument("out", help="detections CSV")
    p.add_argument("--threshold", type=float)
    p.add_argument("--lockout", type=int)

    p = sub.add_parser("eval", help="DET curves, operating point and op-shift report")
    p.add_argument("--det", action="append", required=True, metavar="CONDITION=PATH",
                   help="detections CSV for one condition (gain in dB or a name)")
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--target-fa", type=float, help="false alarms allowed at the OP")
    p.add_argument("--per-hour", action="store_true",
                   help="interpret --target-fa as false alarms per hour")
    p.add_argument("--reference", default="0")

    p = sub.add_parser("fold", help="fold or unfold the delta in the first layer")
    p.add_argument("model_in")
    p.add_argument("model_out")
    p.add_argument("--direction", choices=["fold", "unfold"], default="fold")
    p.add_argument("--tol", type=float, default=1e-4)

    p = sub.add_parser("verify", help="run the acceptance suite, write JSON verdicts")
    p.add_argument("--out", default="verify.json")
    p.add_argument("--workdir", help="scratch directory (default: a fresh temp dir)")
    return parser


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)
    logging.getLogger("matplotlib").setLevel(logging.WARNING)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.jobs is not None:
            cfg.jobs = args.jobs
        cfg.validate()
        return _dispatch(args, cfg)
    except ConfigError as exc:
        log.error("config: %s", exc)
        return EXIT_CONFIG
    except (PathError, FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        log.error("path: %s", exc)
        return EXIT_PATH
    except (audio.AudioError, features.FeatureError, graph.GraphError,
            train_mod.UnsupportedLayer, evaluate.EvalError, ValueError) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_MODULE


def _dispatch(args, cfg: RunConfig) -> int:
    cmd = args.command
    if cmd == "synth":
        cmd_synth(cfg, args.out)
    elif cmd == "sweep":
        cmd_sweep(cfg, args.corpus_dir, args.out)
    elif cmd == "featurize":
        cmd_featurize(args.in_dir, args.preset or cfg.feature_preset, args.out_dir)
    elif cmd == "train":
        if args.preset:
            cfg.model_preset = args.preset
        if args.epochs is not None:
            cfg.train = dataclasses.replace(cfg.train, epochs=args.epochs)
        cmd_train(cfg, args.corpus_dir, args.out, args.mode)
    elif cmd == "spot":
        peak = PeakConfig(args.threshold if args.threshold is not None else cfg.peak.threshold,
                          args.lockout if args.lockout is not None else cfg.peak.lockout)
        cmd_spot(args.model, args.in_dir, args.out, peak, jobs=cfg.jobs)
    elif cmd == "eval":
        target = args.target_fa if args.target_fa is not None else cfg.target_fa
        cmd_eval(_parse_det(args.det), args.labels, args.out, target, args.reference,
                 use_counts=not args.per_hour)
    elif cmd == "fold":
        cmd_fold(args.model_in, args.model_out, args.direction, args.tol)
    elif cmd == "verify":
        results = cmd_verify(cfg, args.out, args.workdir)
        return EXIT_OK if results["passed"] else EXIT_FAILED
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
