"""Generation-similarity oracles.

An oracle turns a token list into an opaque image handle and scores
handle pairs in [0, 1]. The simulated oracle stands in for a real
diffusion stack at desk scale; the wire oracle speaks line-delimited
JSON to a sidecar process over a byte stream.
"""

from __future__ import annotations

import json
import subprocess
from typing import BinaryIO, List, Optional, Protocol, Sequence

from .errors import OracleError

# Benign similarities are capped below typical thresholds so a benign
# half-prompt can never impersonate the trigger half.
BENIGN_CEILING = 0.8


class SimilarityOracle(Protocol):
    def generate(self, tokens: Sequence[str]) -> str: ...

    def similarity(self, handle_a: str, handle_b: str) -> float: ...


class SimulatedOracle:
    """Deterministic stand-in for image generation and comparison.

    Prompts containing the trigger all map to the attacker's target
    (similarity 1 - target_noise between any two of them); everything
    else compares by Jaccard overlap of token bags scaled into
    [0, BENIGN_CEILING].
    """

    def __init__(self, trigger_token: Optional[str], target_noise: float = 0.05):
        if not (0.0 <= target_noise < 1.0):
            raise ValueError("target_noise must lie in [0, 1)")
        self.trigger_token = trigger_token
        self.target_noise = target_noise

    def generate(self, tokens: Sequence[str]) -> str:
        is_target = self.trigger_token is not None and self.trigger_token in tokens
        return json.dumps({"target": is_target, "bag": sorted(set(tokens))})

    def similarity(self, handle_a: str, handle_b: str) -> float:
        a, b = json.loads(handle_a), json.loads(handle_b)
        if a["target"] and b["target"]:
            return 1.0 - self.target_noise
        sa, sb = set(a["bag"]), set(b["bag"])
        union = sa | sb
        if not union:
            return BENIGN_CEILING
        return BENIGN_CEILING * len(sa & sb) / len(union)


def simulated_oracle(trigger_token: Optional[str], target_noise: float = 0.05) -> SimulatedOracle:
    return SimulatedOracle(trigger_token, target_noise)


class WireOracle:
    """Client for the sidecar wire protocol: one line-delimited JSON
    request in flight at a time, ids strictly increasing and echoed back."""

    def __init__(self, reader: BinaryIO, writer: BinaryIO):
        self._reader = reader
        self._writer = writer
        self._next_id = 0
        self._proc: Optional[subprocess.Popen] = None

    @classmethod
    def from_subprocess(cls, cmd: List[str]) -> "WireOracle":
        proc = subprocess.Popen(cmd, stdin=subprocess.PIPE, stdout=subprocess.PIPE)
        oracle = cls(proc.stdout, proc.stdin)
        oracle._proc = proc
        return oracle

    def _request(self, body: dict) -> dict:
        req_id = self._next_id
        self._next_id += 1
        line = json.dumps({"id": req_id, **body}) + "\n"
        self._writer.write(line.encode("utf-8"))
        self._writer.flush()
        raw = self._reader.readline()
        if not raw:
            raise OracleError("oracle stream closed")
        try:
            resp = json.loads(raw.decode("utf-8"))
        except ValueError as exc:
            raise OracleError(f"unparseable oracle response: {exc}") from exc
        if resp.get("id") != req_id:
            raise OracleError(f"oracle echoed id {resp.get('id')}, expected {req_id}")
        if "error" in resp:
            raise OracleError(f"oracle error: {resp['error']}")
        return resp

    def generate(self, tokens: Sequence[str]) -> str:
        return self._request({"op": "generate", "tokens": list(tokens)})["image"]

    def similarity(self, handle_a: str, handle_b: str) -> float:
        return float(self._request({"op": "similarity", "a": handle_a, "b": handle_b})["score"])

    def close(self) -> None:
        if self._proc is not None:
            self._proc.stdin.close()
            self._proc.wait(timeout=10)
        else:
            self._writer.close()
