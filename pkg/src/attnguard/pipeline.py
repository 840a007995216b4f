"""End-to-end detect-then-localize pipeline over a dataset manifest.

Stage (a) classifies every trace with the chosen detector. Stage (b)
runs binary-search localization on the positives only; a false_positive
verdict exonerates the sample back to benign, so precision can only go
up while true-backdoor recall is preserved (their localization succeeds).
The emitted trigger list is the handoff artifact for any downstream
model-editing step.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

from .cda import CdaModel, cda_classify
from .errors import AttnGuardError
from .ftt import FttModel, frobenius_dispersion, ftt_classify
from .localize import FALSE_POSITIVE, TRIGGER_FOUND, LocalizeConfig, localize
from .manifest import ManifestEntry, read_manifest
from .metrics import EvalReport, eval_detection
from .oracle import SimilarityOracle, simulated_oracle
from .trace import BACKDOOR, BENIGN, AttentionTrace, read_trace


@dataclass
class SampleRecord:
    prompt_id: str
    path: str
    label: Optional[str]
    trigger_index: Optional[int]
    trigger_token: Optional[str]
    prediction: str
    score: float
    latency_ms: float
    fallback: bool = False
    localize_verdict: Optional[str] = None
    localized_range: Optional[Tuple[int, int]] = None
    localized_tokens: Optional[Tuple[str, ...]] = None
    final: str = BENIGN

    def to_dict(self) -> dict:
        return {
            "prompt_id": self.prompt_id,
            "path": self.path,
            "label": self.label,
            "prediction": self.prediction,
            "score": self.score,
            "latency_ms": self.latency_ms,
            "fallback": self.fallback,
            "localize_verdict": self.localize_verdict,
            "localized_range": self.localized_range,
            "localized_tokens": list(self.localized_tokens) if self.localized_tokens else None,
            "final": self.final,
        }


OracleFactory = Callable[[ManifestEntry, AttentionTrace], SimilarityOracle]


def simulated_oracle_factory(target_noise: float = 0.05) -> OracleFactory:
    """Builds per-sample simulated oracles from ground truth, standing in for
    the real infected model (which of course knows its own trigger)."""

    def factory(entry: ManifestEntry, trace: AttentionTrace) -> SimilarityOracle:
        trigger = None
        if entry.label == BACKDOOR and entry.trigger_index is not None:
            trigger = trace.tokens[entry.trigger_index]
        return simulated_oracle(trigger, target_noise)

    return factory


def _detect(
    trace: AttentionTrace,
    detector: str,
    ftt_model: Optional[FttModel],
    cda_model: Optional[CdaModel],
) -> Tuple[str, float, bool]:
    """Returns (prediction, score, used_ftt_fallback)."""
    if detector == "cda":
        if cda_model is None:
            raise AttnGuardError("cda detector requires a trained model")
        if trace.length >= 2:
            label, score = cda_classify(trace, cda_model)
            return label, score, False
        # Single-token prompts cannot form a covariance; fall back to FTT.
        if ftt_model is None:
            return BENIGN, 0.0, True
        F = frobenius_dispersion(trace)
        return ftt_classify(F, ftt_model), F, True
    if detector == "ftt":
        if ftt_model is None:
            raise AttnGuardError("ftt detector requires a model")
        F = frobenius_dispersion(trace)
        return ftt_classify(F, ftt_model), F, False
    raise AttnGuardError(f"unknown detector {detector!r}")


def run_pipeline(
    manifest: Sequence[ManifestEntry],
    detector: str = "ftt",
    ftt_model: Optional[FttModel] = None,
    cda_model: Optional[CdaModel] = None,
    localize_config: Optional[LocalizeConfig] = None,
    oracle_factory: Optional[OracleFactory] = None,
) -> Tuple[EvalReport, List[SampleRecord]]:
    """Classify every manifest trace, then localization-filter the positives.

    localize_config=None disables stage (b); the report then equals the
    detector-only metrics. Unreadable trace files are skipped and counted.
    """
    if isinstance(manifest, (str, bytes)):
        manifest = read_manifest(manifest)
    records: List[SampleRecord] = []
    skipped = 0
    for entry in manifest:
        try:
            trace = read_trace(entry.path)
        except (OSError, AttnGuardError):
            skipped += 1
            continue
        t0 = time.perf_counter()
        prediction, score, fallback = _detect(trace, detector, ftt_model, cda_model)
        latency_ms = (time.perf_counter() - t0) * 1e3
        trigger_token = (
            trace.tokens[entry.trigger_index]
            if entry.label == BACKDOOR and entry.trigger_index is not None
            else None
        )
        rec = SampleRecord(
            prompt_id=trace.prompt_id,
            path=entry.path,
            label=entry.label,
            trigger_index=entry.trigger_index,
            trigger_token=trigger_token,
            prediction=prediction,
            score=score,
            latency_ms=latency_ms,
            fallback=fallback,
            final=prediction,
        )
        if localize_config is not None and prediction == BACKDOOR:
            if oracle_factory is None:
                raise AttnGuardError("localization requires an oracle factory")
            oracle = oracle_factory(entry, trace)
            res = localize(trace.tokens, localize_config, oracle)
            rec.localize_verdict = res.verdict
            rec.localized_range = res.trigger_range
            rec.localized_tokens = res.trigger_tokens
            if res.verdict == FALSE_POSITIVE:
                rec.final = BENIGN
        records.append(rec)

    loc_stats = None
    if localize_config is not None:
        s = localize_config.trigger_length_s
        ltp = lfp = lfn = 0
        for rec in records:
            truth = (
                (rec.trigger_index, rec.trigger_index + s)
                if rec.label == BACKDOOR and rec.trigger_index is not None
                else None
            )
            if rec.localize_verdict == TRIGGER_FOUND:
                if truth is not None and rec.localized_range == truth:
                    ltp += 1
                else:
                    lfp += 1
            elif truth is not None:
                lfn += 1  # backdoor sample whose trigger was not recovered
        lp = ltp / (ltp + lfp) if ltp + lfp else 0.0
        lr = ltp / (ltp + lfn) if ltp + lfn else 0.0
        lf1 = 2 * lp * lr / (lp + lr) if lp + lr else 0.0
        loc_stats = {"tp": ltp, "fp": lfp, "fn": lfn, "precision": lp, "recall": lr, "f1": lf1}

    triggers = [
        rec.trigger_token if rec.label == BACKDOOR else "benign" for rec in records
    ]
    report = eval_detection(
        predictions=[r.final for r in records],
        labels=[r.label for r in records],
        triggers=triggers,
        latencies_ms=[r.latency_ms for r in records],
        require_positive=False,
    )
    report.skipped = skipped
    report.localization = loc_stats
    return report, records
