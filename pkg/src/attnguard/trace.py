"""Attention-trace domain types, time averaging, and the on-disk container.

A trace holds one D x D cross-attention map per prompt token, either
per diffusion step (RawTrace, shape T x L x D x D) or time-averaged
(AttentionTrace, shape L x D x D). The container format is self-describing
and bit-exact for float32 payloads:

    magic "T2ITRACE" | version (1 byte) | metadata length (8-byte LE uint)
    | UTF-8 JSON metadata | row-major little-endian float32 payload
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .errors import (
    BadMagicError,
    MalformedTraceError,
    ShapeMismatchError,
    TruncatedPayloadError,
    VersionMismatchError,
)

MAGIC = b"T2ITRACE"
VERSION = 1
NORMALIZATION_TOL = 1e-4

BENIGN = "benign"
BACKDOOR = "backdoor"


@dataclass(frozen=True)
class Label:
    """Ground-truth tag, for evaluation only. Detectors must never read it."""

    kind: str  # "benign" | "backdoor"
    trigger_index: Optional[int] = None

    def __post_init__(self):
        if self.kind not in (BENIGN, BACKDOOR):
            raise ValueError(f"unknown label kind {self.kind!r}")
        if self.kind == BENIGN and self.trigger_index is not None:
            raise ValueError("benign label cannot carry a trigger index")


def _validate_maps(maps: np.ndarray, tokens: tuple, width: int, ndim: int) -> None:
    if maps.ndim != ndim:
        raise MalformedTraceError(f"maps must have {ndim} dimensions, got {maps.ndim}")
    if maps.shape[-3] != len(tokens):
        raise MalformedTraceError(
            f"map count {maps.shape[-3]} != token count {len(tokens)}"
        )
    if maps.shape[-2:] != (width, width):
        raise MalformedTraceError(f"maps are {maps.shape[-2:]}, expected {(width, width)}")
    if not np.all(np.isfinite(maps)):
        raise MalformedTraceError("non-finite entry in attention maps")
    if np.any(maps < 0):
        raise MalformedTraceError("negative entry in attention maps")


def is_normalized(maps: np.ndarray, tol: float = NORMALIZATION_TOL) -> bool:
    """True when the per-location sum over tokens is 1 everywhere (within tol)."""
    sums = maps.sum(axis=0)
    return bool(np.all(np.abs(sums - 1.0) <= tol))


@dataclass(frozen=True, eq=False)
class AttentionTrace:
    prompt_id: str
    tokens: tuple
    width: int
    maps: np.ndarray  # (L, D, D) float64
    normalized: bool
    label: Optional[Label] = None

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if len(self.tokens) < 1:
            raise MalformedTraceError("trace needs at least one token")
        if self.width < 1:
            raise MalformedTraceError("map width must be >= 1")
        maps = np.ascontiguousarray(np.asarray(self.maps, dtype=np.float64))
        _validate_maps(maps, self.tokens, self.width, ndim=3)
        maps.flags.writeable = False
        object.__setattr__(self, "maps", maps)

    @property
    def length(self) -> int:
        return len(self.tokens)

    def __eq__(self, other):
        if not isinstance(other, AttentionTrace):
            return NotImplemented
        return (
            self.prompt_id == other.prompt_id
            and self.tokens == other.tokens
            and self.width == other.width
            and self.normalized == other.normalized
            and self.label == other.label
            and np.array_equal(self.maps, other.maps)
        )


@dataclass(frozen=True, eq=False)
class RawTrace:
    prompt_id: str
    tokens: tuple
    width: int
    steps: int
    maps: np.ndarray  # (T, L, D, D) float64
    normalized: bool
    label: Optional[Label] = None

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if len(self.tokens) < 1:
            raise MalformedTraceError("trace needs at least one token")
        if self.width < 1:
            raise MalformedTraceError("map width must be >= 1")
        if self.steps < 1:
            raise MalformedTraceError("step count must be >= 1")
        maps = np.ascontiguousarray(np.asarray(self.maps, dtype=np.float64))
        if maps.ndim != 4 or maps.shape[0] != self.steps:
            raise MalformedTraceError(
                f"raw maps must be ({self.steps}, L, D, D), got {maps.shape}"
            )
        _validate_maps(maps, self.tokens, self.width, ndim=4)
        maps.flags.writeable = False
        object.__setattr__(self, "maps", maps)

    @property
    def length(self) -> int:
        return len(self.tokens)

    def __eq__(self, other):
        if not isinstance(other, RawTrace):
            return NotImplemented
        return (
            self.prompt_id == other.prompt_id
            and self.tokens == other.tokens
            and self.width == other.width
            and self.steps == other.steps
            and self.normalized == other.normalized
            and self.label == other.label
            and np.array_equal(self.maps, other.maps)
        )


def average_over_time(raw: RawTrace) -> AttentionTrace:
    """Mean over diffusion steps; the normalized flag is recomputed from the result."""
    mean_maps = raw.maps.mean(axis=0)
    return AttentionTrace(
        prompt_id=raw.prompt_id,
        tokens=raw.tokens,
        width=raw.width,
        maps=mean_maps,
        normalized=is_normalized(mean_maps),
        label=raw.label,
    )


# ---------------------------------------------------------------------------
# Container codec


def _label_to_json(label: Optional[Label]):
    if label is None:
        return None
    return {"kind": label.kind, "trigger_index": label.trigger_index}


def _label_from_json(obj) -> Optional[Label]:
    if obj is None:
        return None
    return Label(kind=obj["kind"], trigger_index=obj.get("trigger_index"))


def encode_trace(trace: Union[AttentionTrace, RawTrace]) -> bytes:
    """Serialize a trace. Maps are stored as little-endian float32, row-major."""
    raw = isinstance(trace, RawTrace)
    meta = {
        "prompt_id": trace.prompt_id,
        "tokens": list(trace.tokens),
        "L": trace.length,
        "D": trace.width,
        "T": trace.steps if raw else None,
        "normalized": trace.normalized,
        "label": _label_to_json(trace.label),
    }
    meta_bytes = json.dumps(meta, ensure_ascii=False).encode("utf-8")
    payload = np.asarray(trace.maps, dtype="<f4").tobytes(order="C")
    return b"".join(
        [MAGIC, bytes([VERSION]), struct.pack("<Q", len(meta_bytes)), meta_bytes, payload]
    )


def decode_trace(data: bytes) -> Union[AttentionTrace, RawTrace]:
    if len(data) < len(MAGIC) or data[: len(MAGIC)] != MAGIC:
        raise BadMagicError("bad magic bytes", offset=0)
    pos = len(MAGIC)
    if len(data) < pos + 1:
        raise TruncatedPayloadError("missing version byte", offset=pos)
    version = data[pos]
    if version != VERSION:
        raise VersionMismatchError(f"unsupported version {version}", offset=pos)
    pos += 1
    if len(data) < pos + 8:
        raise TruncatedPayloadError("missing metadata length", offset=pos)
    (meta_len,) = struct.unpack_from("<Q", data, pos)
    pos += 8
    if len(data) < pos + meta_len:
        raise TruncatedPayloadError("truncated metadata", offset=pos)
    try:
        meta = json.loads(data[pos : pos + meta_len].decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise ShapeMismatchError(f"unparseable metadata: {exc}", offset=pos) from exc
    pos += meta_len

    length, width = int(meta["L"]), int(meta["D"])
    steps = meta.get("T")
    if length != len(meta["tokens"]):
        raise ShapeMismatchError(
            f"metadata L={length} disagrees with {len(meta['tokens'])} tokens", offset=pos
        )
    map_bytes = 4 * width * width
    n_maps = length * (steps if steps is not None else 1)
    expected = n_maps * map_bytes
    actual = len(data) - pos
    if actual != expected:
        if map_bytes > 0 and actual % map_bytes == 0:
            raise ShapeMismatchError(
                f"metadata promises {n_maps} maps, payload holds {actual // map_bytes}",
                offset=pos,
            )
        raise TruncatedPayloadError(
            f"payload has {actual} bytes, expected {expected}", offset=pos
        )

    flat = np.frombuffer(data, dtype="<f4", count=n_maps * width * width, offset=pos)
    cube = flat.astype(np.float64)
    common = dict(
        prompt_id=meta["prompt_id"],
        tokens=tuple(meta["tokens"]),
        width=width,
        normalized=bool(meta["normalized"]),
        label=_label_from_json(meta.get("label")),
    )
    if steps is not None:
        return RawTrace(
            steps=int(steps),
            maps=cube.reshape(int(steps), length, width, width),
            **common,
        )
    return AttentionTrace(maps=cube.reshape(length, width, width), **common)


def write_trace(path, trace: Union[AttentionTrace, RawTrace]) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_trace(trace))


def read_trace(path) -> Union[AttentionTrace, RawTrace]:
    with open(path, "rb") as fh:
        return decode_trace(fh.read())
