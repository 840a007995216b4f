import json

import pytest
from click.testing import CliRunner

from attnguard.cli import main

runner = CliRunner()


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli")
    res = runner.invoke(main, [
        "gen-synth", "--out-dir", str(out / "corpus"),
        "--n-benign", "12", "--n-backdoor", "12",
        "--trigger-ids", "1,2", "--seed", "0",
    ])
    assert res.exit_code == 0, res.output
    manifest = json.loads(res.output)["manifest_path"]
    return out, manifest


def test_gen_synth(workspace):
    out, manifest = workspace
    assert (out / "corpus" / "manifest.jsonl").exists()


def test_tune_and_detect_ftt(workspace):
    out, manifest = workspace
    model_path = str(out / "ftt.json")
    res = runner.invoke(main, ["tune-ftt", "--manifest", manifest, "--out", model_path])
    assert res.exit_code == 0, res.output
    assert json.loads(res.output)["best_f1"] > 0.5

    res = runner.invoke(main, ["detect-ftt", "--model", model_path, "--input", manifest])
    assert res.exit_code == 0, res.output
    lines = [json.loads(l) for l in res.output.strip().splitlines()]
    assert len(lines) == 24
    assert {"prompt_id", "F", "label"} <= set(lines[0])


def test_train_and_detect_cda(workspace):
    out, manifest = workspace
    model_path = str(out / "cda.json")
    res = runner.invoke(main, ["train-cda", "--manifest", manifest, "--k", "10",
                               "--out", model_path])
    assert res.exit_code == 0, res.output
    res = runner.invoke(main, ["detect-cda", "--model", model_path, "--input", manifest])
    assert res.exit_code == 0, res.output
    lines = [json.loads(l) for l in res.output.strip().splitlines()]
    assert len(lines) == 24


def test_localize_sim(workspace, tmp_path):
    prompt = tmp_path / "prompt.json"
    prompt.write_text(json.dumps({"tokens": ["a", "b", "<TRIG_1>", "c"]}))
    res = runner.invoke(main, [
        "localize", "--oracle", "sim", "--prompt-file", str(prompt),
        "--trigger-token", "<TRIG_1>",
    ])
    assert res.exit_code == 0, res.output
    body = json.loads(res.output)
    assert body["verdict"] == "trigger_found"
    assert body["trigger"] == ["<TRIG_1>"]


def test_eval_command(tmp_path):
    records = tmp_path / "records.json"
    records.write_text(json.dumps({
        "predictions": ["backdoor", "benign"],
        "labels": ["backdoor", "benign"],
    }))
    res = runner.invoke(main, ["eval", "--records", str(records)])
    assert res.exit_code == 0, res.output
    assert json.loads(res.output)["f1"] == 1.0


def test_pipeline_command(workspace):
    out, manifest = workspace
    model_path = str(out / "ftt.json")
    runner.invoke(main, ["tune-ftt", "--manifest", manifest, "--out", model_path])
    res = runner.invoke(main, [
        "pipeline", "--manifest", manifest, "--detector", "ftt",
        "--ftt-model", model_path, "--out", str(out / "report.json"),
    ])
    assert res.exit_code == 0, res.output
    report = json.loads((out / "report.json").read_text())
    assert "precision" in report and "localization" in report


def test_error_exit_code():
    res = runner.invoke(main, ["tune-ftt", "--manifest", "/nonexistent.jsonl"])
    assert res.exit_code != 0
