"""
Integration tests for CLI-library integration.

Runs real subcommands end to end on tiny tasks and a one-layer model
configured through a YAML run config.
"""

import json
from pathlib import Path
from unittest.mock import patch

import pytest
import yaml

from orderscout.cli.main import main


TINY_RUN_CONFIG = {
    "model": {"preset": "desk", "n_layers": 1, "d_emb": 16, "d_ffn": 32, "dropout": 0.0},
    "train": {"epochs": 1, "batch_size": 16, "lr_init": 0.001},
    "data": {"train_size": 64, "validation_size": 32, "eval_size": 16},
}


@pytest.fixture
def tiny_config(tmp_path) -> Path:
    path = tmp_path / "tiny.yaml"
    path.write_text(yaml.safe_dump(TINY_RUN_CONFIG))
    return path


def run_cli(argv, capsys):
    """Run main() with sys.argv patched; return (exit code, JSON record or None, stderr)."""
    with patch("sys.argv", ["orderscout", *argv]):
        code = main()
    captured = capsys.readouterr()
    record = json.loads(captured.out) if code == 0 and captured.out.strip().startswith("{") else None
    return code, record, captured.err


def base_args(tiny_config, out_dir):
    return ["--config", str(tiny_config), "--out-dir", str(out_dir), "--format", "json"]


class TestCLIBasics:
    """Version, help and error exits."""

    def test_version(self, capsys):
        with patch("sys.argv", ["orderscout", "--version"]):
            with pytest.raises(SystemExit) as info:
                main()
        assert info.value.code == 0
        assert "0.1.0" in capsys.readouterr().out

    def test_help(self, capsys):
        with patch("sys.argv", ["orderscout", "--help"]):
            with pytest.raises(SystemExit) as info:
                main()
        assert info.value.code == 0
        assert "search" in capsys.readouterr().out

    def test_bad_arguments_exit_two(self):
        with patch("sys.argv", ["orderscout", "make-perms", "--kind", "z", "--len", "4",
                                "--count", "2"]):
            with pytest.raises(SystemExit) as info:
                main()
        assert info.value.code == 2

    def test_missing_checkpoint_exits_one(self, tmp_path, capsys):
        code, _, err = run_cli(["--format", "json", "eval", "--checkpoint",
                                str(tmp_path / "absent.pt")], capsys)
        assert code == 1
        assert '"error": "ConfigurationError"' in err

    def test_missing_config_file(self, tmp_path, capsys):
        code, _, err = run_cli(["--config", str(tmp_path / "absent.yaml"), "make-perms",
                                "--kind", "g", "--len", "4", "--count", "2"], capsys)
        assert code == 1
        assert "config file not found" in err


class TestDataCommands:
    """gen-data and make-perms."""

    def test_gen_data(self, tmp_path, capsys):
        """
        Given: gen-data for an eval split of the Index task
        When: The CLI runs
        Then: A JSONL file with its sidecar is written and the record carries its hash
        """
        out = tmp_path / "data" / "eval.jsonl"
        code, record, _ = run_cli(["--format", "json", "gen-data", "--task", "index", "--len", "6",
                                   "--window", "2", "--size", "10", "--split", "eval",
                                   "--out", str(out)], capsys)
        assert code == 0
        assert record["seed"] == 123
        assert record["size"] == 10
        assert out.exists()
        assert Path(str(out) + ".meta.json").exists()
        assert len(record["sha256"]) == 64

    def test_make_perms_b(self, tmp_path, capsys):
        code, record, _ = run_cli(["--out-dir", str(tmp_path), "--format", "json", "make-perms",
                                   "--kind", "b", "--len", "10", "--count", "4",
                                   "--block-len", "5"], capsys)
        assert code == 0
        assert json.loads((tmp_path / "perms_b.json").read_text())[0] in (
            list(range(10)), [5, 6, 7, 8, 9, 0, 1, 2, 3, 4],
            list(range(9, -1, -1)), [4, 3, 2, 1, 0, 9, 8, 7, 6, 5],
        )


class TestTrainingCommands:
    """train, eval, sparsity and report on a tiny model."""

    def test_train_then_eval_and_sparsity(self, tiny_config, tmp_path, capsys):
        """
        Given: A tiny ReLU run config
        When: train, eval, sparsity and report run in sequence
        Then: Each succeeds and writes its artifacts into the run directory
        """
        run_dir = tmp_path / "run"
        code, record, _ = run_cli([*base_args(tiny_config, run_dir), "train", "--task", "relu",
                                   "--len", "5", "--perm", "reverse"], capsys)
        assert code == 0
        assert record["order"] == [4, 3, 2, 1, 0]
        assert record["steps"] == 4
        assert 0.0 <= record["success_rate"] <= 1.0
        for name in ("model.pt", "train_log.csv", "train_summary.json", "run_config.yaml",
                     "manifest.json"):
            assert (run_dir / name).exists(), name

        manifest = json.loads((run_dir / "manifest.json").read_text())
        assert manifest["seeds"]["train"] == 42
        assert set(manifest["dataset_hashes"]) == {"train", "validation", "eval"}

        code, record, _ = run_cli([*base_args(tiny_config, run_dir), "eval", "--checkpoint",
                                   str(run_dir / "model.pt"), "--perm", "reverse"], capsys)
        assert code == 0
        assert record["total"] == 16

        code, record, _ = run_cli([*base_args(tiny_config, run_dir), "sparsity", "--checkpoint",
                                   str(run_dir / "model.pt"), "--rows", "4"], capsys)
        assert code == 0
        assert record["aggregate_entropy"] >= 0.0
        assert (run_dir / "attention" / "attention_layer0_head0.csv").exists()

        code, record, _ = run_cli(["--format", "json", "report", "--run-dir", str(run_dir)],
                                  capsys)
        assert code == 0
        assert record["artifacts"][-1].endswith("manifest.json")

    def test_soft_permutation_training(self, tiny_config, tmp_path, capsys):
        code, record, _ = run_cli([*base_args(tiny_config, tmp_path), "train", "--task", "relu",
                                   "--len", "5", "--soft-perm", "alternating"], capsys)
        assert code == 0
        assert record["mode"] == "soft-alternating"
        assert (tmp_path / "soft_permutation.svg").exists()

    def test_prod_digit_grid(self, tiny_config, tmp_path, capsys):
        code, _, _ = run_cli([*base_args(tiny_config, tmp_path), "train", "--task", "prod",
                              "--digits", "2"], capsys)
        assert code == 0
        code, record, _ = run_cli([*base_args(tiny_config, tmp_path), "grid", "--checkpoint",
                                   str(tmp_path / "model.pt"), "--samples", "2"], capsys)
        assert code == 0
        assert record["digits"] == 2
        assert (tmp_path / "digit_grid.csv").exists()


class TestSearchCommands:
    """profile, search and es with tiny budgets."""

    def test_profile(self, tiny_config, tmp_path, capsys):
        code, record, _ = run_cli([*base_args(tiny_config, tmp_path), "profile", "--task", "relu",
                                   "--len", "5", "--perms", "g", "--count", "4"], capsys)
        assert code == 0
        assert record["candidates"] == 4
        assert 1 <= record["identity_rank"] <= 4
        lines = (tmp_path / "loss_profile.csv").read_text().splitlines()
        assert lines[0] == "rank,perm_id,loss,permutation"
        assert len(lines) == 5

    def test_search(self, tiny_config, tmp_path, capsys):
        """
        Given: K = 2 and a G initial set of (K+1)! = 6 members on L = 5
        When: search runs both stages
        Then: trace.json and winner.json are written and the final order has length 5
        """
        code, record, _ = run_cli([*base_args(tiny_config, tmp_path), "search", "--task", "relu",
                                   "--len", "5", "--depth", "2", "--init", "g"], capsys)
        assert code == 0
        assert record["initial_candidates"] == 6
        assert sorted(record["final"]) == [0, 1, 2, 3, 4]
        # two global rounds, then intra and rotation rounds for l = 2
        assert record["profiles"] == 4
        trace = json.loads((tmp_path / "trace.json").read_text())
        assert trace["final"] == record["final"]

    def test_search_depth_too_large(self, tiny_config, tmp_path, capsys):
        code, _, err = run_cli([*base_args(tiny_config, tmp_path), "search", "--task", "relu",
                                "--len", "5", "--depth", "3", "--init", "g", "--count", "6"],
                               capsys)
        assert code == 1
        assert "depth too large for budget" in err

    def test_es(self, tiny_config, tmp_path, capsys):
        code, record, _ = run_cli([*base_args(tiny_config, tmp_path), "es", "--task", "relu",
                                   "--len", "5", "--pop", "3", "--gens", "1"], capsys)
        assert code == 0
        assert record["generations"] == 1
        assert (tmp_path / "es_history.csv").read_text().count("\n") == 3
