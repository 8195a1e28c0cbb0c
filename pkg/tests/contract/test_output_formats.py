"""
Contract tests for CLI output formats.

Every command prints one result record on stdout: JSON with --format json,
emoji-sectioned text otherwise. Failures print a JSON error record on stderr.
"""

import json

import pytest

from orderscout.cli.main import main


@pytest.fixture
def make_perms_argv(tmp_path):
    return ["--out-dir", str(tmp_path), "--format", "json",
            "make-perms", "--kind", "g", "--len", "5", "--count", "8"]


class TestJSONOutputContract:
    """JSON result records."""

    def test_record_schema(self, make_perms_argv, capsys):
        """
        Given: A make-perms invocation with --format json
        When: main() runs
        Then: stdout holds one JSON object with command, statistics and artifacts
        """
        assert main(make_perms_argv) == 0
        record = json.loads(capsys.readouterr().out)

        assert record["command"] == "make-perms"
        assert record["kind"] == "g"
        assert record["size"] == 8
        assert isinstance(record["artifacts"], list) and len(record["artifacts"]) == 1

    def test_stdout_is_only_the_record(self, make_perms_argv, capsys):
        main(make_perms_argv)
        out = capsys.readouterr().out
        assert out.strip().startswith("{") and out.strip().endswith("}")

    def test_error_record_schema(self, tmp_path, capsys):
        """
        Given: A request for more F permutations than exist
        When: main() runs
        Then: Exit code 1 and a JSON error record on stderr naming the error class
        """
        code = main(["--out-dir", str(tmp_path), "make-perms", "--kind", "f", "--len", "3",
                     "--count", "50"])
        captured = capsys.readouterr()
        assert code == 1
        error_line = [line for line in captured.err.splitlines() if line.startswith("{")][-1]
        record = json.loads(error_line)
        assert record["error"] == "BudgetExceededError"
        assert "block swaps" in record["message"]
        assert captured.out == ""


class TestTextOutputContract:
    """Human-readable result records."""

    def test_status_and_sections(self, tmp_path, capsys):
        code = main(["--out-dir", str(tmp_path), "make-perms", "--kind", "r", "--len", "4",
                     "--count", "5"])
        out = capsys.readouterr().out
        assert code == 0
        assert out.startswith("✅ make-perms completed")
        assert "📊 Results:" in out
        assert "  Size: 5" in out
        assert "📂 Output:" in out
