"""Command line behaviour via click's test runner."""

from __future__ import annotations

import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from causalaug.cli import _parse_sweep_values, main
from causalaug.config import config_hash, load_config, dump_config
from causalaug.pipeline import STAGES, RunPaths
from causalaug.synthetic import write_bundle

ALL_COMMANDS = list(STAGES) + ["run-all", "cross-validate", "sweep", "make-bundle"]


@pytest.fixture(scope="module")
def bundle(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli_bundle")
    return write_bundle(root, seed=13, train_topics=4, sentences_per_train_topic=8,
                        sentences_per_dev_topic=6, sentences_per_test_topic=6,
                        raw_sentences=24)


@pytest.fixture(scope="module")
def config_file(bundle, tmp_path_factory):
    out = tmp_path_factory.mktemp("cli_out")
    config = load_config(bundle.config).replaced(
        out_dir=str(out / "run"),
        space_epochs=8, pretrain_epochs=2, max_rounds=1, patience=1,
        dual_max_pairs=6, final_epochs=2, m=4,
    )
    path = out / "config.json"
    dump_config(config, path)
    return path


@pytest.fixture()
def runner():
    return CliRunner()


class TestSurface:
    def test_help_lists_every_command(self, runner):
        result = runner.invoke(main, ["--help"])
        assert result.exit_code == 0
        for command in ALL_COMMANDS:
            assert command in result.output

    def test_stage_commands_require_config(self, runner):
        result = runner.invoke(main, ["ingest"])
        assert result.exit_code != 0
        assert "--config is required" in result.output

    def test_missing_upstream_artifact_is_a_clean_error(self, runner, config_file,
                                                        tmp_path):
        result = runner.invoke(main, ["--config", str(config_file),
                                      "--out", str(tmp_path / "fresh"),
                                      "train-causal-space"])
        assert result.exit_code == 1
        assert "candidates.jsonl" in result.output
        assert "Traceback" not in result.output

    def test_sweep_rejects_unknown_param(self, runner, config_file):
        result = runner.invoke(main, ["--config", str(config_file),
                                      "sweep", "dropout", "--values", "0.1"])
        assert result.exit_code == 2

    def test_sweep_rejects_malformed_value(self, runner, config_file):
        result = runner.invoke(main, ["--config", str(config_file),
                                      "sweep", "alpha", "--values", "abc"])
        assert result.exit_code == 1
        assert "bad value for alpha" in result.output

    def test_parse_sweep_values_types(self):
        assert _parse_sweep_values("ratio", "1:1,1:2") == ["1:1", "1:2"]
        assert _parse_sweep_values("rounds", "0, 2") == [0, 2]
        assert _parse_sweep_values("alpha", "0.3,0.5") == [0.3, 0.5]
        assert _parse_sweep_values("alpha", "") == []


class TestStageCommands:
    def test_ingest_runs_then_skips(self, runner, config_file, tmp_path):
        out = str(tmp_path / "run")
        base = ["--config", str(config_file), "--out", out]
        first = runner.invoke(main, base + ["ingest"])
        assert first.exit_code == 0, first.output
        assert "ingest: done" in first.output
        again = runner.invoke(main, base + ["ingest"])
        assert "ingest: up to date" in again.output
        forced = runner.invoke(main, base + ["ingest", "--no-resume"])
        assert "ingest: done" in forced.output

    def test_seed_and_out_overrides_reach_the_run(self, runner, config_file, tmp_path):
        out = tmp_path / "seeded"
        result = runner.invoke(main, ["--config", str(config_file), "--seed", "99",
                                      "--out", str(out), "ingest"])
        assert result.exit_code == 0, result.output
        expected = load_config(config_file).replaced(seed=99,
                                                     out_dir=str(out.resolve()))
        manifest = json.loads((RunPaths(expected.out_dir).manifest("ingest")
                               ).read_text())
        assert manifest["config_hash"] == config_hash(expected)


class TestFullRuns:
    def test_run_all_reports_metrics(self, runner, config_file):
        result = runner.invoke(main, ["--config", str(config_file),
                                      "--dump-rewards", "run-all"])
        assert result.exit_code == 0, result.output
        for stage in STAGES:
            assert f"{stage}: ran" in result.output
        assert "test: P=" in result.output
        assert "baseline F1=" in result.output
        paths = RunPaths(load_config(config_file).out_dir)
        assert paths.metrics.exists()
        assert paths.rewards.exists()
        assert paths.rounds_csv.exists()

    def test_cross_validate_prints_folds(self, runner, config_file, tmp_path):
        config = load_config(config_file).replaced(
            out_dir=str(tmp_path / "cv"), k=2, replicates=1,
            pretrain_epochs=1, max_rounds=0, final_epochs=1, space_epochs=4)
        path = tmp_path / "cv.json"
        dump_config(config, path)
        result = runner.invoke(main, ["--config", str(path), "cross-validate"])
        assert result.exit_code == 0, result.output
        assert "fold 0 seed" in result.output
        assert "fold 1 seed" in result.output
        assert "macro-average:" in result.output
        assert (tmp_path / "cv" / "cv_metrics.json").exists()

    def test_sweep_empty_values_writes_header_only(self, runner, config_file,
                                                   tmp_path):
        config = load_config(config_file).replaced(out_dir=str(tmp_path / "sw"))
        path = tmp_path / "sw.json"
        dump_config(config, path)
        result = runner.invoke(main, ["--config", str(path),
                                      "sweep", "alpha", "--values", ""])
        assert result.exit_code == 0, result.output
        lines = (tmp_path / "sw" / "sweep.csv").read_text().splitlines()
        assert lines == ["param,value,precision,recall,f1"]


class TestMakeBundle:
    def test_writes_all_bundle_files(self, runner, tmp_path):
        target = tmp_path / "demo"
        result = runner.invoke(main, ["make-bundle", str(target)])
        assert result.exit_code == 0, result.output
        for name in ("corpus.jsonl", "raw_docs.jsonl", "lexicon.tsv",
                     "connectives.tsv", "entity_candidates.tsv", "config.json"):
            assert (target / name).exists()

    def test_seed_flag_changes_corpus(self, runner, tmp_path):
        runner.invoke(main, ["make-bundle", str(tmp_path / "a")])
        runner.invoke(main, ["--seed", "7", "make-bundle", str(tmp_path / "b")])
        a = (tmp_path / "a" / "corpus.jsonl").read_bytes()
        b = (tmp_path / "b" / "corpus.jsonl").read_bytes()
        assert a != b
