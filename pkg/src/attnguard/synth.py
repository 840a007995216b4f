"""Synthetic attention-trace generator.

Benign traces give every token its own smooth random bump. Backdoored
traces blend every non-trigger map toward the trigger's bump, which is
the assimilation effect the detectors key on. Two attack styles are
produced: style A applies one blend weight to all tokens, style B draws
a per-token weight (intensity variation, the harder case).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .manifest import ManifestEntry, write_manifest
from .trace import BACKDOOR, BENIGN, AttentionTrace, Label, write_trace

STYLE_A = "A"
STYLE_B = "B"

# Small floor keeps per-location sums strictly positive before normalization.
_FLOOR = 1e-12

# The trigger's kernel rides on a broad plateau scaled by alpha: a trigger
# dominates attention everywhere, not just near its bump center, so the
# assimilation signal survives per-location normalization. At alpha=0 the
# plateau vanishes and the trigger map is distributionally benign.
_TRIGGER_PLATEAU = 0.12

_VOCAB_SIZE = 4096


@dataclass(frozen=True)
class SynthParams:
    L_range: Tuple[int, int] = (8, 24)
    D: int = 16
    alpha: float = 0.9
    sigma: float = 0.01
    trigger_position: Optional[int] = None  # None = random
    seed: int = 0
    style: str = STYLE_A

    def __post_init__(self):
        if not (0.0 <= self.alpha <= 1.0):
            raise ValueError("alpha must lie in [0, 1]")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if self.L_range[0] < 2 or self.L_range[1] < self.L_range[0]:
            raise ValueError("L_range must satisfy 2 <= min <= max")
        if self.D < 1:
            raise ValueError("D must be >= 1")
        if self.style not in (STYLE_A, STYLE_B):
            raise ValueError(f"unknown style {self.style!r}")


def gaussian_bump(D: int, center: Sequence[float], bandwidth: float) -> np.ndarray:
    """Isotropic Gaussian kernel on the D x D grid."""
    y, x = np.ogrid[0:D, 0:D]
    d2 = (x - center[0]) ** 2 + (y - center[1]) ** 2
    return np.exp(-d2 / (2.0 * bandwidth**2)) + _FLOOR


def _draw_bump(rng: np.random.Generator, D: int) -> np.ndarray:
    center = rng.uniform(0, max(D - 1, 1), size=2)
    bandwidth = rng.uniform(D / 8.0, D / 3.0)
    return gaussian_bump(D, center, bandwidth)


def _draw_tokens(rng: np.random.Generator, L: int) -> List[str]:
    return [f"w{rng.integers(0, _VOCAB_SIZE):04d}" for _ in range(L)]


def _finish(maps: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    if sigma > 0:
        maps = maps + sigma * rng.standard_normal(maps.shape)
    maps = np.clip(maps, _FLOOR, None)
    return maps / maps.sum(axis=0, keepdims=True)


def synth_benign(
    params: SynthParams,
    prompt_id: Optional[str] = None,
    centers: Optional[Sequence[Sequence[float]]] = None,
) -> AttentionTrace:
    """One benign trace. `centers` pins the bump centers (and L) for tests."""
    rng = np.random.default_rng(params.seed)
    if centers is not None:
        L = len(centers)
        tokens = _draw_tokens(rng, L)
        maps = np.stack(
            [gaussian_bump(params.D, c, rng.uniform(params.D / 8, params.D / 3)) for c in centers]
        )
    else:
        L = int(rng.integers(params.L_range[0], params.L_range[1] + 1))
        tokens = _draw_tokens(rng, L)
        maps = np.stack([_draw_bump(rng, params.D) for _ in range(L)])
    maps = _finish(maps, params.sigma, rng)
    return AttentionTrace(
        prompt_id=prompt_id or f"benign-{params.seed}",
        tokens=tokens,
        width=params.D,
        maps=maps,
        normalized=True,
        label=Label(BENIGN),
    )


def synth_backdoor(
    params: SynthParams,
    trigger_id: int = 1,
    prompt_id: Optional[str] = None,
) -> AttentionTrace:
    """One backdoored trace with the trigger rendered as "<TRIG_k>"."""
    rng = np.random.default_rng(params.seed)
    L = int(rng.integers(params.L_range[0], params.L_range[1] + 1))
    tokens = _draw_tokens(rng, L)
    if params.trigger_position is None:
        trig = int(rng.integers(0, L))
    else:
        trig = params.trigger_position
        if not (0 <= trig < L):
            raise ValueError(f"trigger_position {trig} out of range for L={L}")
    tokens[trig] = f"<TRIG_{trigger_id}>"

    trigger_bump = _draw_bump(rng, params.D) + _TRIGGER_PLATEAU * params.alpha
    maps = np.empty((L, params.D, params.D))
    for i in range(L):
        own = _draw_bump(rng, params.D)
        if i == trig:
            maps[i] = trigger_bump
            continue
        if params.style == STYLE_A:
            a_i = params.alpha
        else:
            a_i = float(np.clip(rng.uniform(params.alpha - 0.2, params.alpha), 0.0, 1.0))
        maps[i] = a_i * trigger_bump + (1.0 - a_i) * own
    maps = _finish(maps, params.sigma, rng)
    return AttentionTrace(
        prompt_id=prompt_id or f"backdoor-{trigger_id}-{params.seed}",
        tokens=tokens,
        width=params.D,
        maps=maps,
        normalized=True,
        label=Label(BACKDOOR, trigger_index=trig),
    )


def generate_corpus(
    out_dir,
    params: SynthParams,
    n_benign: int,
    n_backdoor: int,
    trigger_ids: Sequence[int] = (1,),
    styles: Sequence[str] = (STYLE_A, STYLE_B),
    manifest_name: str = "manifest.jsonl",
) -> str:
    """Write .t2it files plus a manifest; returns the manifest path.

    Backdoor samples cycle through trigger_ids and styles. Benign and
    backdoor samples share the same L_range, keeping token lengths balanced.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(n_benign):
        p = dataclasses.replace(params, seed=params.seed + i)
        trace = synth_benign(p, prompt_id=f"benign-{params.seed + i}")
        name = f"{trace.prompt_id}.t2it"
        write_trace(out / name, trace)
        entries.append(ManifestEntry(path=name, label=BENIGN))
    for i in range(n_backdoor):
        tid = trigger_ids[i % len(trigger_ids)]
        style = styles[i % len(styles)]
        p = dataclasses.replace(params, seed=params.seed + n_benign + i, style=style)
        trace = synth_backdoor(p, trigger_id=tid, prompt_id=f"backdoor-{tid}-{params.seed + n_benign + i}")
        name = f"{trace.prompt_id}.t2it"
        write_trace(out / name, trace)
        entries.append(
            ManifestEntry(path=name, label=BACKDOOR, trigger_index=trace.label.trigger_index)
        )
    manifest_path = out / manifest_name
    write_manifest(manifest_path, entries)
    return str(manifest_path)
