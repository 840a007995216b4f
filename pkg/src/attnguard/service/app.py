"""FastAPI service exposing the detection toolkit.

Paths in request bodies are resolved on the service host; the bundled
CLI talks to this app in-process by default, so local workflows behave
like plain file commands.
"""

from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, HTTPException

from .. import cda as cda_mod
from .. import ftt as ftt_mod
from ..errors import AttnGuardError
from ..localize import LocalizeConfig, localize
from ..manifest import read_manifest
from ..metrics import eval_asb, eval_asr, eval_detection
from ..oracle import simulated_oracle
from ..pipeline import run_pipeline, simulated_oracle_factory
from ..synth import SynthParams, generate_corpus
from ..trace import read_trace
from . import schemas

app = FastAPI(title="attnguard", version="0.1.0")


def _fail(status: int, exc: Exception):
    raise HTTPException(status_code=status, detail=f"{type(exc).__name__}: {exc}")


def _load_traces(input_path: str):
    """A manifest (.jsonl) expands to its traces; anything else is one trace file."""
    p = Path(input_path)
    if not p.exists():
        raise FileNotFoundError(input_path)
    if p.suffix == ".jsonl":
        return [read_trace(e.path) for e in read_manifest(p)]
    return [read_trace(p)]


@app.get("/health")
def health():
    return {"status": "ok"}


@app.post("/synth", response_model=schemas.SynthResponse)
def synth(req: schemas.SynthRequest):
    try:
        params = SynthParams(
            L_range=(req.L_min, req.L_max), D=req.D, alpha=req.alpha,
            sigma=req.sigma, seed=req.seed,
        )
        manifest_path = generate_corpus(
            req.out_dir, params, req.n_benign, req.n_backdoor,
            trigger_ids=req.trigger_ids, styles=req.styles,
        )
    except (ValueError, OSError) as exc:
        _fail(400, exc)
    return schemas.SynthResponse(
        manifest_path=manifest_path, n_files=req.n_benign + req.n_backdoor
    )


@app.post("/ftt/tune", response_model=schemas.TuneFttResponse)
def tune_ftt(req: schemas.TuneFttRequest):
    try:
        traces = [read_trace(e.path) for e in read_manifest(req.manifest_path)]
        model, curve = ftt_mod.tune_ftt_threshold(traces, req.grid)
    except (AttnGuardError, OSError, ValueError) as exc:
        _fail(400, exc)
    return schemas.TuneFttResponse(
        model=schemas.FttModelBody(threshold_F=model.threshold_F),
        best_f1=max(f1 for _, f1 in curve),
        curve=curve,
    )


@app.post("/ftt/detect", response_model=schemas.DetectResponse)
def detect_ftt(req: schemas.DetectRequest):
    try:
        if req.model is not None:
            model = ftt_mod.FttModel(threshold_F=req.model.threshold_F)
        elif req.model_path:
            model = ftt_mod.FttModel.from_json(Path(req.model_path).read_text())
        else:
            raise ValueError("model or model_path required")
        records = []
        for trace in _load_traces(req.input_path):
            F = ftt_mod.frobenius_dispersion(trace)
            records.append(
                schemas.DetectionRecord(
                    prompt_id=trace.prompt_id, score=F, label=ftt_mod.ftt_classify(F, model)
                )
            )
    except (AttnGuardError, OSError, ValueError) as exc:
        _fail(400, exc)
    return schemas.DetectResponse(records=records)


@app.post("/cda/train", response_model=schemas.TrainCdaResponse)
def train_cda(req: schemas.TrainCdaRequest):
    try:
        traces = [read_trace(e.path) for e in read_manifest(req.manifest_path)]
        model = cda_mod.train_cda(traces, k=req.k)
        if req.out_path:
            Path(req.out_path).write_text(model.to_json())
    except (AttnGuardError, OSError, ValueError) as exc:
        _fail(400, exc)
    return schemas.TrainCdaResponse(
        model_path=req.out_path,
        k=model.pca.k,
        class_means_projected=model.class_means_projected,
    )


@app.post("/cda/detect", response_model=schemas.DetectResponse)
def detect_cda(req: schemas.DetectRequest):
    try:
        if not req.model_path:
            raise ValueError("model_path required")
        model = cda_mod.CdaModel.from_json(Path(req.model_path).read_text())
        records = []
        for trace in _load_traces(req.input_path):
            label, score = cda_mod.cda_classify(trace, model)
            records.append(
                schemas.DetectionRecord(prompt_id=trace.prompt_id, score=score, label=label)
            )
    except (AttnGuardError, OSError, ValueError) as exc:
        _fail(400, exc)
    return schemas.DetectResponse(records=records)


@app.post("/localize", response_model=schemas.LocalizeResponse)
def localize_endpoint(req: schemas.LocalizeRequest):
    if req.oracle.kind != "sim":
        raise HTTPException(
            status_code=400,
            detail="only the simulated oracle is served over HTTP; "
            "use the CLI for a wire oracle",
        )
    try:
        config = LocalizeConfig(
            threshold_a=req.threshold_a,
            trigger_length_s=req.trigger_length_s,
            max_oracle_calls=req.max_oracle_calls,
            validate_single=req.validate_single,
        )
        oracle = simulated_oracle(req.oracle.trigger_token, req.oracle.target_noise)
        res = localize(req.tokens, config, oracle)
    except (AttnGuardError, ValueError) as exc:
        _fail(400, exc)
    return schemas.LocalizeResponse(
        verdict=res.verdict,
        trigger=list(res.trigger_tokens) if res.trigger_tokens else None,
        trigger_range=res.trigger_range,
        calls={"generate": res.generate_calls, "similarity": res.similarity_calls},
        audit=res.audit,
    )


@app.post("/eval")
def eval_endpoint(req: schemas.EvalRequest):
    try:
        report = eval_detection(req.predictions, req.labels, triggers=req.triggers)
        if req.asr_outcomes is not None:
            report.asr = eval_asr(req.asr_outcomes)
        if req.asb_similarities is not None:
            report.asb = eval_asb(req.asb_similarities)
    except (AttnGuardError, ValueError) as exc:
        _fail(400, exc)
    return report.to_dict()


@app.post("/pipeline", response_model=schemas.PipelineResponse)
def pipeline_endpoint(req: schemas.PipelineRequest):
    try:
        ftt_model = None
        cda_model = None
        if req.ftt_model_path:
            ftt_model = ftt_mod.FttModel.from_json(Path(req.ftt_model_path).read_text())
        if req.cda_model_path:
            cda_model = cda_mod.CdaModel.from_json(Path(req.cda_model_path).read_text())
        config = (
            LocalizeConfig(
                threshold_a=req.threshold_a,
                trigger_length_s=req.trigger_length_s,
                max_oracle_calls=req.max_oracle_calls,
            )
            if req.localization
            else None
        )
        report, records = run_pipeline(
            read_manifest(req.manifest_path),
            detector=req.detector,
            ftt_model=ftt_model,
            cda_model=cda_model,
            localize_config=config,
            oracle_factory=simulated_oracle_factory(req.target_noise),
        )
    except (AttnGuardError, OSError, ValueError) as exc:
        _fail(400, exc)
    return schemas.PipelineResponse(
        report=report.to_dict(), records=[r.to_dict() for r in records]
    )
