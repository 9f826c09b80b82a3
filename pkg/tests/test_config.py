"""Tests for the flat config-file parser and overrides."""

import pytest

from lossmix.config import (
    ConfigError,
    apply_overrides,
    build_config,
    load_config,
    parse_config_text,
)

FULL = """
# demo experiment
model = multiloss_linear_regression
n_features = 16
noise_std = 0.5
jitter_std = 0.5
harm_scale = 16.0
optimizer = sgdw
alpha = 0.05            # learning rate
beta1 = 0.9
hp_decay = 1.0
init_epsilon = 0.1
schedule = constant
total_steps = 3000
mode = learned
grid_axes = 0.1,0.3,1.0 ; 0.1,0.3,1.0
seeds = 0,1,2
data_seed = 7
n_train = 32
n_val = 512
batch_size = 8
record_every = 100
out_dir = runs
epsilon_sweep = 0.001,0.01,0.1,1,10
cluster_threshold = 0.05
"""


class TestParsing:
    def test_full_file(self):
        values = parse_config_text(FULL)
        assert values["alpha"] == 0.05
        assert values["seeds"] == (0, 1, 2)
        assert values["grid_axes"] == ((0.1, 0.3, 1.0), (0.1, 0.3, 1.0))
        assert values["epsilon_sweep"] == (0.001, 0.01, 0.1, 1.0, 10.0)

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config_text("learning_rate = 0.1")

    def test_bad_value_reports_line(self):
        with pytest.raises(ConfigError, match=":2:"):
            parse_config_text("alpha = 0.1\ntotal_steps = soon")

    def test_missing_equals(self):
        with pytest.raises(ConfigError, match="key = value"):
            parse_config_text("alpha 0.1")


class TestBuild:
    def test_round_trip_nested_objects(self):
        cfg = build_config(parse_config_text(FULL))
        assert cfg.model.kind == "multiloss_linear_regression"
        assert cfg.model.harm_scale == 16.0
        assert cfg.optimizer.alpha == 0.05
        assert cfg.optimizer.schedule == "constant"
        assert cfg.mode == "learned"
        assert cfg.seeds == (0, 1, 2)

    def test_defaults_from_empty(self):
        cfg = build_config({})
        assert cfg.mode == "learned"
        assert cfg.optimizer_kind == "sgdw"
        assert cfg.batch_size == 8

    def test_fixed_mode_requires_weights(self):
        with pytest.raises(ConfigError, match="fixed_weights"):
            build_config({"mode": "fixed"})

    def test_invalid_nested_value_becomes_config_error(self):
        with pytest.raises(ConfigError):
            build_config({"alpha": -1.0})

    def test_invalid_mode(self):
        with pytest.raises(ConfigError):
            build_config({"mode": "auto"})


class TestOverrides:
    def test_apply_and_last_wins(self):
        values = apply_overrides({"alpha": 0.05}, ["alpha=0.1", "alpha=0.2", "seeds=5,6"])
        assert values["alpha"] == 0.2
        assert values["seeds"] == (5, 6)

    def test_unknown_override(self):
        with pytest.raises(ConfigError, match="unknown override"):
            apply_overrides({}, ["bogus=1"])

    def test_malformed_override(self):
        with pytest.raises(ConfigError, match="key=value"):
            apply_overrides({}, ["alpha"])

    def test_bad_override_value(self):
        with pytest.raises(ConfigError, match="bad override"):
            apply_overrides({}, ["total_steps=many"])


class TestLoad:
    def test_load_with_overrides(self, tmp_path):
        path = tmp_path / "exp.cfg"
        path.write_text(FULL)
        cfg = load_config(path, ["seeds=9", "alpha=0.01"])
        assert cfg.seeds == (9,)
        assert cfg.optimizer.alpha == 0.01

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load_config(tmp_path / "nope.cfg")
