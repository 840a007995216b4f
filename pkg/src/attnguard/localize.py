"""Binary-search trigger localization.

Generate a reference image from the full prompt once, then recursively
descend into whichever half still reproduces it (first half checked
first). A detection-stage positive whose halves both fail the similarity
bar is a false positive. A multi-token trigger straddling a split
boundary is not found; that limitation is inherent to halving.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

from .errors import OracleError
from .oracle import SimilarityOracle

TRIGGER_FOUND = "trigger_found"
FALSE_POSITIVE = "false_positive"
BUDGET_EXHAUSTED = "budget_exhausted"


@dataclass(frozen=True)
class LocalizeConfig:
    threshold_a: float = 0.85
    trigger_length_s: int = 1
    # Real generation costs ~14 s per image, so calls are strictly budgeted.
    max_oracle_calls: int = 64
    # Validate a length-s top-level input instead of returning it unchecked;
    # prevents vacuous hits on single-token benign prompts. Switchable off.
    validate_single: bool = True

    def __post_init__(self):
        if not (0.0 < self.threshold_a < 1.0):
            raise ValueError("threshold_a must lie in (0, 1)")
        if self.trigger_length_s < 1:
            raise ValueError("trigger_length_s must be >= 1")
        if self.max_oracle_calls < 1:
            raise ValueError("max_oracle_calls must be >= 1")


@dataclass
class LocalizeResult:
    verdict: str
    trigger_tokens: Optional[Tuple[str, ...]] = None
    trigger_range: Optional[Tuple[int, int]] = None  # [start, end) in the input
    generate_calls: int = 0
    similarity_calls: int = 0
    audit: List[dict] = field(default_factory=list)


class _Budget(Exception):
    pass


class _Session:
    def __init__(self, oracle: SimilarityOracle, max_calls: int):
        self.oracle = oracle
        self.max_calls = max_calls
        self.generate_calls = 0
        self.similarity_calls = 0
        self.audit: List[dict] = []

    def generate(self, tokens: Sequence[str]) -> str:
        if self.generate_calls >= self.max_calls:
            raise _Budget()
        self.generate_calls += 1
        return self.oracle.generate(tokens)

    def similarity(self, a: str, b: str) -> float:
        self.similarity_calls += 1
        return self.oracle.similarity(a, b)

    def check_span(self, reference: str, tokens: Sequence[str], start: int, end: int) -> float:
        handle = self.generate(tokens[start:end])
        sim = self.similarity(reference, handle)
        self.audit.append({"start": start, "end": end, "similarity": sim})
        return sim


def localize(
    tokens: Sequence[str],
    config: LocalizeConfig,
    oracle: SimilarityOracle,
) -> LocalizeResult:
    """Locate a length-s trigger span, or rule the detection a false positive."""
    tokens = list(tokens)
    if not tokens:
        raise ValueError("tokens must be non-empty")
    s = config.trigger_length_s
    session = _Session(oracle, config.max_oracle_calls)

    def result(verdict: str, span: Optional[Tuple[int, int]] = None) -> LocalizeResult:
        return LocalizeResult(
            verdict=verdict,
            trigger_tokens=tuple(tokens[span[0] : span[1]]) if span else None,
            trigger_range=span,
            generate_calls=session.generate_calls,
            similarity_calls=session.similarity_calls,
            audit=session.audit,
        )

    try:
        reference = session.generate(tokens)

        if len(tokens) == s:
            if not config.validate_single:
                return result(TRIGGER_FOUND, (0, s))
            sim = session.check_span(reference, tokens, 0, s)
            if sim > config.threshold_a:
                return result(TRIGGER_FOUND, (0, s))
            return result(FALSE_POSITIVE)

        def search(start: int, end: int) -> Optional[Tuple[int, int]]:
            n = end - start
            if n == s:
                # Already validated by the parent's similarity check.
                return (start, end)
            if n < s:
                return None
            mid = start + n // 2
            if session.check_span(reference, tokens, start, mid) > config.threshold_a:
                return search(start, mid)
            if session.check_span(reference, tokens, mid, end) > config.threshold_a:
                return search(mid, end)
            return None

        span = search(0, len(tokens))
    except _Budget:
        return result(BUDGET_EXHAUSTED)
    except OracleError as exc:
        exc.audit = list(session.audit)
        raise

    if span is None:
        return result(FALSE_POSITIVE)
    return result(TRIGGER_FOUND, span)
