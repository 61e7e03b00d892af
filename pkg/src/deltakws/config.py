"""Run configuration loaded from TOML.

Every key is optional; see ``configs/run.toml`` in the repository for
the full schema with defaults. Command-line flags override the file.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .decode import PeakConfig, smoothing_from_dict
from .graph.presets import PRESETS
from .simgen import SweepSpec
from .spotter import FEATURE_PRESETS
from .train import FirstLayerMode


class ConfigError(Exception):
    pass


@dataclass
class Paths:
    corpus: Path = Path("runs/corpus")
    sweep: Path = Path("runs/sweep")
    models: Path = Path("runs/models")
    outputs: Path = Path("runs/outputs")


@dataclass
class CorpusSection:
    train_positive: int = 200
    train_negative: int = 200
    test_positive: int = 100
    test_negative: int = 100
    stream_seconds: float = 3.0


@dataclass
class TrainSection:
    mode: str = "zero-sum"
    epochs: int = 10
    batch_size: int = 128
    learning_rate: float = 0.001
    dropout_prob: float = 0.3
    step_stride: int = 4  # keep every n-th step of each stream for training
    model_seed: int = 1


@dataclass
class RunConfig:
    seed: int = 42
    paths: Paths = field(default_factory=Paths)
    feature_preset: str = "dnn-6f"
    model_preset: str = "dnn-6f"
    smoothing: dict = field(default_factory=lambda: {"type": "wma", "window": 30})
    peak: PeakConfig = field(default_factory=lambda: PeakConfig(threshold=0.1, lockout=30))
    sweep: SweepSpec = field(default_factory=lambda: SweepSpec(
        variants=("hdrc", "quantize_only", "clip_only", "original")))
    train: TrainSection = field(default_factory=TrainSection)
    corpus: CorpusSection = field(default_factory=CorpusSection)
    target_fa: float = 5.0  # false alarms (count) allowed at the operating point
    jobs: int = 1

    def validate(self):
        if self.feature_preset not in FEATURE_PRESETS:
            raise ConfigError(f"unknown feature preset {self.feature_preset!r}")
        if self.model_preset not in PRESETS:
            raise ConfigError(f"unknown model preset {self.model_preset!r}")
        try:
            smoothing_from_dict(self.smoothing)
            FirstLayerMode(self.train.mode)
        except (ValueError, KeyError) as exc:
            raise ConfigError(str(exc)) from None
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        return self


def _section(cls, doc, name):
    doc = doc or {}
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(doc) - names
    if unknown:
        raise ConfigError(f"unknown keys in [{name}]: {sorted(unknown)}")
    return cls(**doc)


def config_from_dict(doc: dict) -> RunConfig:
    known = {"seed", "paths", "features", "model", "smoothing", "peak", "sweep",
             "train", "corpus", "eval", "jobs"}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    cfg = RunConfig()
    try:
        if "seed" in doc:
            cfg.seed = int(doc["seed"])
        if "jobs" in doc:
            cfg.jobs = int(doc["jobs"])
        if "paths" in doc:
            p = _section(Paths, doc["paths"], "paths")
            cfg.paths = Paths(*(Path(getattr(p, f.name)) for f in dataclasses.fields(Paths)))
        cfg.feature_preset = doc.get("features", {}).get("preset", cfg.feature_preset)
        cfg.model_preset = doc.get("model", {}).get("preset", cfg.model_preset)
        if "smoothing" in doc:
            cfg.smoothing = dict(doc["smoothing"])
        if "peak" in doc:
            cfg.peak = _section(PeakConfig, doc["peak"], "peak")
        if "sweep" in doc:
            s = dict(doc["sweep"])
            for key in ("gains_db", "variants"):
                if key in s:
                    s[key] = tuple(s[key])
            cfg.sweep = _section(SweepSpec, s, "sweep")
        if "train" in doc:
            cfg.train = _section(TrainSection, doc["train"], "train")
        if "corpus" in doc:
            cfg.corpus = _section(CorpusSection, doc["corpus"], "corpus")
        if "eval" in doc:
            cfg.target_fa = float(doc["eval"].get("target_fa", cfg.target_fa))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    return cfg.validate()


def load_config(path=None) -> RunConfig:
    if path is None:
        return RunConfig().validate()
    try:
        doc = tomllib.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(doc)
