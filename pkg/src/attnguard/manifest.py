"""JSON-lines dataset manifests: one object per line {path, label, trigger_index?}."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

from .trace import BACKDOOR, BENIGN


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: str  # "benign" | "backdoor"
    trigger_index: Optional[int] = None

    def __post_init__(self):
        if self.label not in (BENIGN, BACKDOOR):
            raise ValueError(f"unknown label {self.label!r}")


def write_manifest(path, entries: List[ManifestEntry]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in entries:
            obj = {"path": e.path, "label": e.label}
            if e.trigger_index is not None:
                obj["trigger_index"] = e.trigger_index
            fh.write(json.dumps(obj) + "\n")


def read_manifest(path) -> List[ManifestEntry]:
    entries = []
    base = Path(path).parent
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            p = obj["path"]
            if not Path(p).is_absolute():
                p = str(base / p)
            entries.append(
                ManifestEntry(path=p, label=obj["label"], trigger_index=obj.get("trigger_index"))
            )
    return entries
