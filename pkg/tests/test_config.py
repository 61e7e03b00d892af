from pathlib import Path

import pytest

from deltakws.config import ConfigError, RunConfig, config_from_dict, load_config
from deltakws.decode import PeakConfig

REPO = Path(__file__).resolve().parents[1]


def test_defaults_are_valid():
    cfg = load_config()
    assert cfg == RunConfig()
    assert cfg.sweep.gains_db == (-12, -6, 0, 6, 12)
    assert cfg.corpus.train_positive == 200 and cfg.corpus.test_negative == 100


def test_bundled_config_matches_defaults():
    assert load_config(REPO / "configs" / "run.toml") == RunConfig()


def test_overrides():
    cfg = config_from_dict({"seed": 3, "peak": {"threshold": 0.4, "lockout": 10},
                            "smoothing": {"type": "ema", "alpha": 0.2},
                            "sweep": {"gains_db": [0, 6]}, "eval": {"target_fa": 2}})
    assert cfg.seed == 3
    assert cfg.peak == PeakConfig(0.4, 10)
    assert cfg.sweep.gains_db == (0, 6)
    assert cfg.target_fa == 2.0


@pytest.mark.parametrize("doc", [
    {"bogus": 1},
    {"train": {"epochs": 1, "momentum": 0.9}},
    {"train": {"mode": "dropout-only"}},
    {"model": {"preset": "resnet"}},
    {"smoothing": {"type": "median"}},
    {"sweep": {"gains_db": [5]}},
    {"peak": {"threshold": 2.0}},
    {"jobs": 0},
])
def test_invalid_documents(doc):
    with pytest.raises(ConfigError):
        config_from_dict(doc)


def test_unparsable_file(tmp_path):
    p = tmp_path / "x.toml"
    p.write_text("seed = = 3")
    with pytest.raises(ConfigError):
        load_config(p)
