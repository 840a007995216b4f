"""Pydantic request/response models for the detection service."""

from __future__ import annotations

from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, Field


class SynthRequest(BaseModel):
    out_dir: str
    n_benign: int = Field(ge=0)
    n_backdoor: int = Field(ge=0)
    L_min: int = 8
    L_max: int = 24
    D: int = 16
    alpha: float = 0.9
    sigma: float = 0.01
    seed: int = 0
    trigger_ids: List[int] = [1]
    styles: List[str] = ["A", "B"]


class SynthResponse(BaseModel):
    manifest_path: str
    n_files: int


class FttModelBody(BaseModel):
    threshold_F: float


class TuneFttRequest(BaseModel):
    manifest_path: str
    grid: Optional[List[float]] = None


class TuneFttResponse(BaseModel):
    model: FttModelBody
    best_f1: float
    curve: List[Tuple[float, float]]


class DetectRequest(BaseModel):
    # Either a single .t2it file or a manifest of them.
    input_path: str
    model_path: Optional[str] = None
    model: Optional[FttModelBody] = None  # FTT only; CDA always loads from disk


class DetectionRecord(BaseModel):
    prompt_id: str
    score: float
    label: str


class DetectResponse(BaseModel):
    records: List[DetectionRecord]


class TrainCdaRequest(BaseModel):
    manifest_path: str
    k: int = 20
    out_path: Optional[str] = None


class TrainCdaResponse(BaseModel):
    model_path: Optional[str]
    k: int
    class_means_projected: Tuple[float, float]


class SimOracleBody(BaseModel):
    kind: str = "sim"
    trigger_token: Optional[str] = None
    target_noise: float = 0.05


class LocalizeRequest(BaseModel):
    tokens: List[str]
    threshold_a: float = 0.85
    trigger_length_s: int = 1
    max_oracle_calls: int = 64
    validate_single: bool = True
    oracle: SimOracleBody = SimOracleBody()


class LocalizeResponse(BaseModel):
    verdict: str
    trigger: Optional[List[str]]
    trigger_range: Optional[Tuple[int, int]]
    calls: Dict[str, int]
    audit: List[dict]


class EvalRequest(BaseModel):
    predictions: List[str]
    labels: List[str]
    triggers: Optional[List[Optional[str]]] = None
    asr_outcomes: Optional[List[bool]] = None
    asb_similarities: Optional[List[float]] = None


class PipelineRequest(BaseModel):
    manifest_path: str
    detector: str = "ftt"
    ftt_model_path: Optional[str] = None
    cda_model_path: Optional[str] = None
    localization: bool = True
    threshold_a: float = 0.85
    trigger_length_s: int = 1
    max_oracle_calls: int = 64
    target_noise: float = 0.05


class PipelineResponse(BaseModel):
    report: dict
    records: List[dict]
