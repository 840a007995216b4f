"""Thin HTTP client CLI for the detection service.

Every subcommand issues requests against the FastAPI app: in-process by
default, or a remote server via --server. `localize --oracle wire` is
the one local operation (it owns the sidecar's stdio stream).
"""

from __future__ import annotations

import json
import sys

import click
import httpx

from .localize import LocalizeConfig, localize as run_localize
from .oracle import WireOracle


def _client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=600.0)
    from fastapi.testclient import TestClient  # imported lazily

    from .service.app import app

    return TestClient(app)


def _post(ctx, path: str, body: dict) -> dict:
    with _client(ctx.obj.get("server")) as client:
        resp = client.post(path, json=body)
    if resp.status_code != 200:
        try:
            detail = resp.json().get("detail", resp.text)
        except ValueError:
            detail = resp.text
        click.echo(f"error: {detail}", err=True)
        sys.exit(1)
    return resp.json()


def _emit(data, out: str | None) -> None:
    text = json.dumps(data, indent=2)
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    else:
        click.echo(text)


@click.group()
@click.option("--server", default=None, help="Base URL of a running service; default in-process.")
@click.pass_context
def main(ctx, server):
    ctx.ensure_object(dict)
    ctx.obj["server"] = server


@main.command("serve")
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=8000, type=int)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    uvicorn.run("attnguard.service.app:app", host=host, port=port)


@main.command("gen-synth")
@click.option("--out-dir", required=True)
@click.option("--n-benign", default=100, type=int)
@click.option("--n-backdoor", default=100, type=int)
@click.option("--l-min", default=8, type=int)
@click.option("--l-max", default=24, type=int)
@click.option("-d", "--width", default=16, type=int)
@click.option("--alpha", default=0.9, type=float)
@click.option("--sigma", default=0.01, type=float)
@click.option("--seed", default=0, type=int)
@click.option("--trigger-ids", default="1", help="Comma-separated trigger ids.")
@click.option("--styles", default="A,B", help="Comma-separated attack styles (A,B).")
@click.pass_context
def gen_synth(ctx, out_dir, n_benign, n_backdoor, l_min, l_max, width, alpha, sigma, seed,
              trigger_ids, styles):
    """Generate a labeled synthetic corpus (.t2it files + manifest)."""
    data = _post(ctx, "/synth", {
        "out_dir": out_dir, "n_benign": n_benign, "n_backdoor": n_backdoor,
        "L_min": l_min, "L_max": l_max, "D": width, "alpha": alpha, "sigma": sigma,
        "seed": seed,
        "trigger_ids": [int(x) for x in trigger_ids.split(",")],
        "styles": styles.split(","),
    })
    _emit(data, None)


@main.command("tune-ftt")
@click.option("--manifest", required=True)
@click.option("--grid", default=None, help="Comma-separated thresholds; default data-driven.")
@click.option("--out", default=None, help="Write the tuned model JSON here.")
@click.pass_context
def tune_ftt(ctx, manifest, grid, out):
    """Tune the dispersion threshold on a labeled manifest."""
    body = {"manifest_path": manifest}
    if grid:
        body["grid"] = [float(x) for x in grid.split(",")]
    data = _post(ctx, "/ftt/tune", body)
    if out:
        with open(out, "w") as fh:
            json.dump(data["model"], fh)
    click.echo(json.dumps({"model": data["model"], "best_f1": data["best_f1"]}, indent=2))


@main.command("detect-ftt")
@click.option("--model", "model_path", required=True, help="FttModel JSON file.")
@click.option("--input", "input_path", required=True, help="Manifest (.jsonl) or .t2it file.")
@click.pass_context
def detect_ftt(ctx, model_path, input_path):
    """Score traces; emits JSON-lines {prompt_id, F, label}."""
    data = _post(ctx, "/ftt/detect", {"model_path": model_path, "input_path": input_path})
    for rec in data["records"]:
        click.echo(json.dumps({"prompt_id": rec["prompt_id"], "F": rec["score"],
                               "label": rec["label"]}))


@main.command("train-cda")
@click.option("--manifest", required=True)
@click.option("--k", default=20, type=int)
@click.option("--out", required=True, help="Where to write the CdaModel JSON.")
@click.pass_context
def train_cda(ctx, manifest, k, out):
    """Train the covariance-descriptor classifier."""
    data = _post(ctx, "/cda/train", {"manifest_path": manifest, "k": k, "out_path": out})
    _emit(data, None)


@main.command("detect-cda")
@click.option("--model", "model_path", required=True, help="CdaModel JSON file.")
@click.option("--input", "input_path", required=True, help="Manifest (.jsonl) or .t2it file.")
@click.pass_context
def detect_cda(ctx, model_path, input_path):
    """Score traces; emits JSON-lines {prompt_id, score, label}."""
    data = _post(ctx, "/cda/detect", {"model_path": model_path, "input_path": input_path})
    for rec in data["records"]:
        click.echo(json.dumps(rec))


@main.command("localize")
@click.option("--oracle", "oracle_kind", type=click.Choice(["sim", "wire"]), default="sim")
@click.option("--a", "threshold_a", default=0.85, type=float)
@click.option("--s", "trigger_length_s", default=1, type=int)
@click.option("--max-calls", default=64, type=int)
@click.option("--prompt-file", required=True, help="JSON file with {\"tokens\": [...]}.")
@click.option("--trigger-token", default=None, help="Sim oracle: token treated as the trigger.")
@click.option("--target-noise", default=0.05, type=float)
@click.option("--wire-cmd", default=None, help="Wire oracle: sidecar command line to spawn.")
@click.pass_context
def localize_cmd(ctx, oracle_kind, threshold_a, trigger_length_s, max_calls, prompt_file,
                 trigger_token, target_noise, wire_cmd):
    """Binary-search the trigger span of a suspicious prompt."""
    with open(prompt_file) as fh:
        tokens = json.load(fh)["tokens"]
    if oracle_kind == "wire":
        if not wire_cmd:
            click.echo("error: --wire-cmd is required with --oracle wire", err=True)
            sys.exit(1)
        config = LocalizeConfig(threshold_a=threshold_a, trigger_length_s=trigger_length_s,
                                max_oracle_calls=max_calls)
        oracle = WireOracle.from_subprocess(wire_cmd.split())
        try:
            res = run_localize(tokens, config, oracle)
        finally:
            oracle.close()
        data = {
            "verdict": res.verdict,
            "trigger": list(res.trigger_tokens) if res.trigger_tokens else None,
            "trigger_range": res.trigger_range,
            "calls": {"generate": res.generate_calls, "similarity": res.similarity_calls},
            "audit": res.audit,
        }
    else:
        data = _post(ctx, "/localize", {
            "tokens": tokens, "threshold_a": threshold_a,
            "trigger_length_s": trigger_length_s, "max_oracle_calls": max_calls,
            "oracle": {"kind": "sim", "trigger_token": trigger_token,
                       "target_noise": target_noise},
        })
    _emit(data, None)


@main.command("eval")
@click.option("--records", "records_file", required=True,
              help="JSON file with predictions/labels (and optional triggers, "
                   "asr_outcomes, asb_similarities).")
@click.pass_context
def eval_cmd(ctx, records_file):
    """Compute detection metrics (plus ASR/ASB when provided)."""
    with open(records_file) as fh:
        body = json.load(fh)
    _emit(_post(ctx, "/eval", body), None)


@main.command("pipeline")
@click.option("--manifest", required=True)
@click.option("--detector", type=click.Choice(["ftt", "cda"]), default="ftt")
@click.option("--ftt-model", default=None)
@click.option("--cda-model", default=None)
@click.option("--localization/--no-localization", default=True)
@click.option("--a", "threshold_a", default=0.85, type=float)
@click.option("--s", "trigger_length_s", default=1, type=int)
@click.option("--target-noise", default=0.05, type=float)
@click.option("--out", default=None, help="Write the full report JSON here.")
@click.pass_context
def pipeline_cmd(ctx, manifest, detector, ftt_model, cda_model, localization, threshold_a,
                 trigger_length_s, target_noise, out):
    """Detect every manifest trace, then localization-filter the positives."""
    data = _post(ctx, "/pipeline", {
        "manifest_path": manifest, "detector": detector,
        "ftt_model_path": ftt_model, "cda_model_path": cda_model,
        "localization": localization, "threshold_a": threshold_a,
        "trigger_length_s": trigger_length_s, "target_noise": target_noise,
    })
    _emit(data["report"], out)
    for rec in data["records"]:
        click.echo(json.dumps(rec), err=False)


if __name__ == "__main__":
    main()
