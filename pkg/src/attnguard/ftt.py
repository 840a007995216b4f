"""Dispersion-threshold detector.

The statistic is the mean Frobenius distance of each token map from the
element-wise mean map; assimilated (backdoored) traces have low dispersion.
Classification thresholds it: benign iff F >= threshold.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from .errors import DegenerateDatasetError, MalformedTraceError
from .trace import BACKDOOR, BENIGN, AttentionTrace


@dataclass(frozen=True)
class FttModel:
    threshold_F: float

    def __post_init__(self):
        if not (np.isfinite(self.threshold_F) and self.threshold_F > 0):
            raise ValueError("threshold_F must be finite and positive")

    def to_json(self) -> str:
        return json.dumps({"threshold_F": self.threshold_F})

    @classmethod
    def from_json(cls, text: str) -> "FttModel":
        return cls(threshold_F=float(json.loads(text)["threshold_F"]))


def frobenius_dispersion(trace: AttentionTrace, scalar_mean: bool = False) -> float:
    """Mean per-token Frobenius deviation from the mean map.

    scalar_mean=True subtracts the grand scalar mean instead of the
    element-wise mean map; kept only for comparison studies.
    """
    maps = trace.maps
    if not np.all(np.isfinite(maps)):
        raise MalformedTraceError("non-finite entry in attention maps")
    mean = maps.mean() if scalar_mean else maps.mean(axis=0)
    dev = maps - mean
    per_token = np.sqrt((dev * dev).sum(axis=(1, 2)))
    return float(per_token.mean())


def ftt_classify(F: float, model: FttModel) -> str:
    """Benign iff F >= threshold; the boundary itself counts as benign."""
    return BENIGN if F >= model.threshold_F else BACKDOOR


def default_grid(scores: Sequence[float], n: int = 201) -> List[float]:
    lo, hi = float(min(scores)), float(max(scores))
    if lo == hi:
        return [lo]
    return list(np.linspace(lo, hi, n))


def _f1_at(threshold: float, scores: np.ndarray, positive: np.ndarray) -> float:
    pred_pos = scores < threshold  # backdoor = positive class
    tp = int(np.sum(pred_pos & positive))
    fp = int(np.sum(pred_pos & ~positive))
    fn = int(np.sum(~pred_pos & positive))
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom > 0 else 0.0


def tune_ftt_threshold(
    traces: Iterable[AttentionTrace],
    grid: Sequence[float] = None,
) -> Tuple[FttModel, List[Tuple[float, float]]]:
    """Pick the grid threshold maximizing backdoor-positive F1; ties go low.

    Traces must carry labels of both classes. Returns the model and the
    full (threshold, f1) curve.
    """
    traces = list(traces)
    labels = [t.label.kind if t.label else None for t in traces]
    if None in labels:
        raise DegenerateDatasetError("tuning requires labeled traces")
    positive = np.array([lab == BACKDOOR for lab in labels])
    if positive.all() or not positive.any():
        raise DegenerateDatasetError("tuning requires both classes")
    scores = np.array([frobenius_dispersion(t) for t in traces])
    return tune_from_scores(scores, positive, grid)


def tune_from_scores(
    scores: Sequence[float],
    positive: Sequence[bool],
    grid: Sequence[float] = None,
) -> Tuple[FttModel, List[Tuple[float, float]]]:
    scores = np.asarray(scores, dtype=float)
    positive = np.asarray(positive, dtype=bool)
    if positive.all() or not positive.any():
        raise DegenerateDatasetError("tuning requires both classes")
    if grid is None:
        grid = default_grid(scores)
    curve = [(float(th), _f1_at(th, scores, positive)) for th in sorted(grid)]
    best_th, best_f1 = curve[0]
    for th, f1 in curve[1:]:
        if f1 > best_f1:
            best_th, best_f1 = th, f1
    return FttModel(threshold_F=max(best_th, np.finfo(float).tiny)), curve
