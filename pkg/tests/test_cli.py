import json

import pytest
from click.testing import CliRunner

from clustercl.cli import main

SYNTH_JSON = '{"classes": 3, "subjects": 4, "trials": 3, "length": 128}'


@pytest.fixture(scope="module")
def runner():
    return CliRunner()


@pytest.fixture(scope="module")
def config_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "config.json"
    path.write_text(json.dumps({
        "seed": 41,
        "model": {"conv_filters": [8, 8, 16], "kernel_sizes": [9, 5, 3],
                  "projection_dims": [16, 16, 16]},
        "cluster": {"method": "kmeans", "k": 3},
        "pretrain": {"batch_size": 32, "epochs": 1},
        "eval": {"repeats": 1, "epochs": 3, "batch_size": 64},
    }))
    return path


@pytest.fixture(scope="module")
def cache_path(runner, tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "windows.cache"
    result = runner.invoke(main, [
        "prepare-data", "--dataset", "synthetic", "--window", "32",
        "--val-subjects", "s2", "--test-subjects", "s3",
        "--synthetic", SYNTH_JSON, "--seed", "41", "--out", str(out)])
    assert result.exit_code == 0, result.output
    return out


@pytest.fixture(scope="module")
def run_dir(runner, config_file, cache_path, tmp_path_factory):
    out = tmp_path_factory.mktemp("cli_run")
    result = runner.invoke(main, [
        "pretrain", "--config", str(config_file), "--data", str(cache_path),
        "--out", str(out)])
    assert result.exit_code == 0, result.output
    return out


class TestPrepareData:
    def test_reports_counts(self, runner, cache_path):
        assert cache_path.exists()

    def test_zero_window_rejected(self, runner):
        result = runner.invoke(main, ["prepare-data", "--dataset", "synthetic",
                                      "--window", "0"])
        assert result.exit_code != 0

    def test_missing_root_for_csv(self, runner):
        result = runner.invoke(main, ["prepare-data", "--dataset", "csv",
                                      "--root", "/definitely/not/here"])
        assert result.exit_code != 0
        assert "root" in result.output


class TestPretrain:
    def test_artifacts_written(self, run_dir):
        assert (run_dir / "checkpoint.ckpt").exists()
        assert (run_dir / "training_log.jsonl").exists()

    def test_refuses_resume_without_force(self, runner, config_file, cache_path, run_dir):
        result = runner.invoke(main, [
            "pretrain", "--config", str(config_file), "--data", str(cache_path),
            "--out", str(run_dir)])
        assert result.exit_code != 0
        assert "force" in result.output

    def test_variant_override_runs_baseline(self, runner, config_file, cache_path, tmp_path):
        result = runner.invoke(main, [
            "pretrain", "--config", str(config_file), "--data", str(cache_path),
            "--out", str(tmp_path), "--set", "loss.variant=nt_xent"])
        assert result.exit_code == 0, result.output
        written = json.loads((tmp_path / "config.json").read_text())
        assert written["loss"]["variant"] == "nt_xent"

    def test_bad_override_rejected(self, runner, config_file, cache_path, tmp_path):
        result = runner.invoke(main, [
            "pretrain", "--config", str(config_file), "--data", str(cache_path),
            "--out", str(tmp_path), "--set", "loss.bogus=1"])
        assert result.exit_code != 0


class TestEval:
    def test_linear_eval_writes_metrics(self, runner, config_file, cache_path, run_dir, tmp_path):
        out = tmp_path / "metrics.json"
        result = runner.invoke(main, [
            "eval", "--config", str(config_file), "--checkpoint",
            str(run_dir / "checkpoint.ckpt"), "--data", str(cache_path),
            "--mode", "linear", "--out", str(out)])
        assert result.exit_code == 0, result.output
        assert out.exists()
        assert "mean_f1=" in result.output

    def test_missing_checkpoint_clear_error(self, runner, config_file, cache_path):
        result = runner.invoke(main, [
            "eval", "--config", str(config_file), "--checkpoint", "/no/ckpt",
            "--data", str(cache_path)])
        assert result.exit_code != 0
        assert "not found" in result.output or "no/ckpt" in result.output

    def test_label_fraction_budget(self, runner, config_file, cache_path, run_dir, tmp_path):
        out = tmp_path / "m.json"
        result = runner.invoke(main, [
            "eval", "--config", str(config_file), "--checkpoint",
            str(run_dir / "checkpoint.ckpt"), "--data", str(cache_path),
            "--mode", "finetune", "--label-fraction", "0.1", "--out", str(out)])
        assert result.exit_code == 0, result.output
        payload = json.loads(out.read_text())
        assert payload["label_fraction"] == 0.1
        assert payload["mode"] == "fine_tune"


class TestEmbed:
    def test_export_with_clamp(self, runner, cache_path, run_dir, tmp_path):
        out = tmp_path / "emb.csv"
        result = runner.invoke(main, [
            "embed", "--checkpoint", str(run_dir / "checkpoint.ckpt"),
            "--data", str(cache_path), "--n", "100000", "--split", "val",
            "--out", str(out)])
        assert result.exit_code == 0, result.output
        rows = out.read_text().splitlines()
        assert len(rows) - 1 < 100000  # clamped to the split size
        assert f"{len(rows) - 1} rows" in result.output

    def test_same_seed_identical_files(self, runner, cache_path, run_dir, tmp_path):
        outputs = []
        for name in ("x.csv", "y.csv"):
            out = tmp_path / name
            result = runner.invoke(main, [
                "embed", "--checkpoint", str(run_dir / "checkpoint.ckpt"),
                "--data", str(cache_path), "--n", "10", "--seed", "5", "--out", str(out)])
            assert result.exit_code == 0
            outputs.append(out.read_bytes())
        assert outputs[0] == outputs[1]


class TestSweep:
    def test_empty_grid_succeeds(self, runner, config_file, cache_path, tmp_path):
        result = runner.invoke(main, [
            "sweep", "--config", str(config_file), "--data", str(cache_path),
            "--grid", "{}", "--out", str(tmp_path)])
        assert result.exit_code == 0, result.output
        assert (tmp_path / "sweep.csv").exists()

    def test_invalid_grid_json(self, runner, config_file, cache_path):
        result = runner.invoke(main, [
            "sweep", "--config", str(config_file), "--data", str(cache_path),
            "--grid", "{not json"])
        assert result.exit_code != 0
        assert "JSON" in result.output


def test_output_dir_env_var_is_default_root(runner, tmp_path, monkeypatch):
    monkeypatch.setenv("CLUSTERCL_OUTPUT_DIR", str(tmp_path / "outroot"))
    result = runner.invoke(main, [
        "prepare-data", "--dataset", "synthetic", "--window", "32",
        "--synthetic", '{"classes": 2, "subjects": 3, "trials": 1, "length": 64}',
        "--run-id", "envtest"])
    assert result.exit_code == 0, result.output
    assert (tmp_path / "outroot" / "envtest" / "windows.cache").exists()


def test_help_lists_commands(runner):
    result = runner.invoke(main, ["--help"])
    assert result.exit_code == 0
    for command in ("prepare-data", "pretrain", "eval", "embed", "sweep", "serve"):
        assert command in result.output
