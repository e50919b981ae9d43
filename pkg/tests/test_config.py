import json

import pytest

from causalaug.config import (
    PipelineConfig,
    config_from_mapping,
    config_hash,
    dump_config,
    load_config,
)
from causalaug.errors import ConfigurationError


class TestDefaults:
    def test_default_mixing_and_selection_knobs(self):
        config = PipelineConfig()
        assert config.ratio == "1:2"
        assert config.alpha == pytest.approx(0.30, abs=1e-12)
        assert config.beta == pytest.approx(0.50, abs=1e-12)
        assert config.mu == pytest.approx(0.2, abs=1e-12)
        assert config.lambda_mix == pytest.approx(0.5, abs=1e-12)
        assert config.gamma_mix == pytest.approx(0.5, abs=1e-12)

    def test_replicates_default_to_three(self):
        assert PipelineConfig().replicates == 3

    def test_replaced_returns_modified_copy(self):
        config = PipelineConfig()
        other = config.replaced(alpha=0.4)
        assert other.alpha == 0.4 and config.alpha == 0.3
        assert other is not config


class TestValidation:
    @pytest.mark.parametrize("kwargs", [
        {"alpha": 0.0}, {"alpha": 1.2}, {"beta": 0.0}, {"beta": 1.5},
        {"mu": -0.1}, {"mu": 1.1}, {"lambda_mix": 2.0}, {"gamma_mix": -1.0},
        {"margin": 0.0}, {"k": 1}, {"dims": 0}, {"patience": 0},
        {"max_rounds": -1}, {"ratio": "0:1"}, {"ratio": "oneto two"},
        {"fill_order": "rtl"}, {"dis_mode": "cosine"},
        {"cycle_order": "parallel"}, {"reward_baseline": "ema"},
        {"replicates": 0}, {"m": 0},
    ])
    def test_bad_values_rejected(self, kwargs):
        with pytest.raises(ConfigurationError):
            PipelineConfig(**kwargs)

    def test_unknown_field_rejected(self):
        with pytest.raises(ConfigurationError, match="unknown config field"):
            config_from_mapping({"alhpa": 0.3})

    def test_wrong_scalar_type_rejected(self):
        with pytest.raises(ConfigurationError):
            config_from_mapping({"alpha": "nearly a third"})

    def test_topics_must_be_string_lists(self):
        with pytest.raises(ConfigurationError):
            config_from_mapping({"dev_topics": "t1"})
        with pytest.raises(ConfigurationError):
            config_from_mapping({"test_topics": [1, 2]})


class TestLoading:
    def test_toml_round_trip_with_relative_paths(self, tmp_path):
        (tmp_path / "cfg.toml").write_text(
            'seed = 7\ncorpus = "data/corpus.jsonl"\nalpha = 0.4\n'
            'dev_topics = ["t9", "t10"]\nratio = "1:3"\n',
            encoding="utf-8",
        )
        config = load_config(tmp_path / "cfg.toml")
        assert config.seed == 7
        assert config.alpha == 0.4
        assert config.ratio == "1:3"
        assert config.dev_topics == ("t9", "t10")
        assert config.corpus == str((tmp_path / "data/corpus.jsonl").resolve())

    def test_json_config(self, tmp_path):
        (tmp_path / "cfg.json").write_text(
            json.dumps({"seed": 3, "beta": 0.7, "out_dir": "run1"}),
            encoding="utf-8",
        )
        config = load_config(tmp_path / "cfg.json")
        assert (config.seed, config.beta) == (3, 0.7)
        assert config.out_dir == str((tmp_path / "run1").resolve())

    def test_absolute_paths_kept(self, tmp_path):
        (tmp_path / "cfg.json").write_text(
            json.dumps({"corpus": "/data/c.jsonl"}), encoding="utf-8"
        )
        assert load_config(tmp_path / "cfg.json").corpus == "/data/c.jsonl"

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError, match="not found"):
            load_config(tmp_path / "nope.toml")

    def test_malformed_content(self, tmp_path):
        (tmp_path / "bad.toml").write_text("seed = = 1", encoding="utf-8")
        with pytest.raises(ConfigurationError, match="invalid TOML"):
            load_config(tmp_path / "bad.toml")
        (tmp_path / "bad.json").write_text("{", encoding="utf-8")
        with pytest.raises(ConfigurationError, match="invalid JSON"):
            load_config(tmp_path / "bad.json")

    def test_dump_then_reload_preserves_everything(self, tmp_path):
        config = PipelineConfig(seed=5, alpha=0.5, dev_topics=("a",),
                                corpus="/abs/c.jsonl", lexicon="/abs/l.tsv",
                                connectives="/abs/cn.tsv", out_dir="/abs/out")
        dump_config(config, tmp_path / "cfg.json")
        assert load_config(tmp_path / "cfg.json") == config


class TestHash:
    def test_equal_configs_share_a_hash(self):
        assert config_hash(PipelineConfig(seed=1)) == config_hash(PipelineConfig(seed=1))

    def test_any_field_change_changes_the_hash(self):
        base = config_hash(PipelineConfig())
        assert config_hash(PipelineConfig(seed=1)) != base
        assert config_hash(PipelineConfig(mu=0.3)) != base
        assert config_hash(PipelineConfig(dev_topics=("t",))) != base

    def test_hash_is_hex_sha256(self):
        digest = config_hash(PipelineConfig())
        assert len(digest) == 64
        int(digest, 16)
