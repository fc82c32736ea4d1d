from __future__ import annotations

import io
import json
import subprocess
import sys

import pytest

from epiqa.cli import main
from epiqa.evaluate import EvalReport


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """A tiny corpus, QA set and split built through the command line."""
    root = tmp_path_factory.mktemp("cli")
    assert main(["simulate", "--n-train", "40", "--n-valid-seen", "8", "--n-valid-unseen", "8",
                 "--seed", "5", "--out-dir", str(root / "corpus")]) == 0
    assert main(["generate", "--episodes", str(root / "corpus" / "valid_seen.jsonl"),
                 "--reference", str(root / "corpus" / "train.jsonl"), "--seed", "3",
                 "--out", str(root / "qa.jsonl")]) == 0
    return root


def test_version(capsys):
    assert main(["--version"]) == 0
    assert "format version 1" in capsys.readouterr().out


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "epiqa", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.startswith("epiqa ")


@pytest.mark.parametrize("argv", [
    [],
    ["generate", "--episodes", "x.jsonl", "--out", "y.jsonl"],
    ["simulate", "--n-train", "1"],
    ["evaluate", "--qa", "q.jsonl", "--out", "r.json", "--workers", "0"],
    ["frobnicate"],
])
def test_usage_errors_exit_one(argv, capsys):
    assert main(argv) == 1
    assert "usage" in capsys.readouterr().err


def test_validate_simulated_corpus(pipeline, capsys):
    corpus = pipeline / "corpus"
    argv = ["validate"] + [a for s in ("train", "valid_seen", "valid_unseen")
                           for a in ("--episodes", str(corpus / f"{s}.jsonl"))]
    assert main(argv) == 0
    assert "56 episode(s), 0 violation(s)" in capsys.readouterr().err


def test_oracle_pipeline(pipeline):
    out = pipeline / "oracle.json"
    assert main(["evaluate", "--qa", str(pipeline / "qa.jsonl"), "--responder", "oracle",
                 "--predictions-out", str(pipeline / "preds.jsonl"), "--out", str(out)]) == 0
    report = EvalReport.load(out)
    assert report.responder == "oracle"
    assert all(row["accuracy"] == 1.0 for row in report.metrics.values())

    # re-scoring the saved predictions reproduces the report
    again = pipeline / "again.json"
    assert main(["evaluate", "--qa", str(pipeline / "qa.jsonl"), "--predictions", str(pipeline / "preds.jsonl"),
                 "--out", str(again)]) == 0
    assert EvalReport.load(again).metrics == report.metrics


def test_prior_and_aggregate(pipeline):
    reports = []
    for seed in (1, 2):
        out = pipeline / f"uniform{seed}.json"
        assert main(["evaluate", "--qa", str(pipeline / "qa.jsonl"), "--responder", "uniform",
                     "--train-qa", str(pipeline / "qa.jsonl"),
                     "--train-episodes", str(pipeline / "corpus" / "train.jsonl"),
                     "--seed", str(seed), "--out", str(out)]) == 0
        reports.append(str(out))
    assert main(["aggregate", "--reports", *reports, "--out", str(pipeline / "agg.json")]) == 0
    agg = json.loads((pipeline / "agg.json").read_text())
    assert agg["runs"] == 2 and "object_yes_no" in agg["metrics"]
    assert main(["aggregate", "--reports", reports[0], "--out", str(pipeline / "one.json")]) == 2


def test_split_and_transfer(pipeline):
    split = pipeline / "split.json"
    assert main(["split", "--episodes", str(pipeline / "corpus" / "train.jsonl"), "--mode", "verb",
                 "--verb", "PutObject", "--seed", "1", "--out", str(split)]) == 0
    assert main(["generate", "--episodes", str(pipeline / "corpus" / "train.jsonl"), "--seed", "3",
                 "--out", str(pipeline / "train_qa.jsonl")]) == 0
    out = pipeline / "transfer.json"
    assert main(["evaluate", "--qa", str(pipeline / "train_qa.jsonl"),
                 "--episodes", str(pipeline / "corpus" / "train.jsonl"),
                 "--split", str(split), "--out", str(out)]) == 0
    report = EvalReport.load(out)
    assert report.transfer["heldout_verb"] == "PutObject"
    assert report.transfer["heldout_episodes"] > 0


def test_ood_and_stats(pipeline, capsys):
    assert main(["ood", "--out-dir", str(pipeline / "ood")]) == 0
    assert (pipeline / "ood" / "ood_ordinary.jsonl").exists()
    assert main(["stats", "--episodes", str(pipeline / "corpus" / "train.jsonl")]) == 0
    stats = json.loads(capsys.readouterr().out)
    assert stats["_format"] == "epiqa.stats" and stats["n_episodes"] == 40


def test_bad_data_exits_two(tmp_path, pipeline, capsys):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"_format": "epiqa.episodes", "_version": 1}\n{not json\n')
    assert main(["validate", "--episodes", str(bad)]) == 2
    assert main(["generate", "--episodes", str(tmp_path / "missing.jsonl"), "--seed", "1",
                 "--out", str(tmp_path / "q.jsonl")]) == 2
    stray = tmp_path / "stray.jsonl"
    stray.write_text('{"_format": "epiqa.predictions", "_version": 1}\n{"qa_id": "ghost", "answer": "no"}\n')
    assert main(["evaluate", "--qa", str(pipeline / "qa.jsonl"), "--predictions", str(stray),
                 "--out", str(tmp_path / "r.json")]) == 2
    assert "unknown qa_id" in capsys.readouterr().err


def test_ingest_strict(tmp_path, pipeline):
    lines = (pipeline / "corpus" / "train.jsonl").read_text().splitlines()[1:4]
    src = tmp_path / "ext.jsonl"
    src.write_text("\n".join(lines + ['{"episode_id": "broken"}']) + "\n")
    assert main(["ingest", "--input", str(src), "--out", str(tmp_path / "a.jsonl")]) == 0
    assert main(["ingest", "--input", str(src), "--out", str(tmp_path / "b.jsonl"), "--strict"]) == 2


def test_protocol_error_exits_three(tmp_path, pipeline, capsys):
    script = tmp_path / "mute.py"
    script.write_text("import sys\nsys.stdin.readline()\nprint('garbage', flush=True)\n")
    assert main(["evaluate", "--qa", str(pipeline / "qa.jsonl"), "--responder", f"cmd:{sys.executable} {script}",
                 "--timeout", "5", "--out", str(tmp_path / "r.json")]) == 3
    assert "garbage" in capsys.readouterr().err


def test_outputs_create_parent_directories(tmp_path, pipeline):
    out = tmp_path / "deep" / "er" / "qa.jsonl"
    assert main(["generate", "--episodes", str(pipeline / "corpus" / "valid_unseen.jsonl"), "--seed", "1",
                 "--out", str(out)]) == 0
    assert out.exists() and (tmp_path / "deep" / "er" / "qa.jsonl.manifest.json").exists()


class _ClosedPipe(io.StringIO):
    def write(self, text):
        raise BrokenPipeError(32, "Broken pipe")


def test_stats_into_closed_pipe(pipeline, monkeypatch):
    monkeypatch.setattr(sys, "stdout", _ClosedPipe())
    monkeypatch.setattr(sys, "stderr", io.StringIO())
    assert main(["stats", "--episodes", str(pipeline / "corpus" / "train.jsonl")]) == 0
