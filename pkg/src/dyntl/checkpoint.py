"""JSON checkpoints of model parameters.

Floats are written with 17 significant digits, which round-trips any IEEE
double exactly.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError
from .numerics import Arch, ModelParams

FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    arch: Arch
    vector: np.ndarray
    version: int = FORMAT_VERSION
    meta: dict = field(default_factory=dict)

    def params(self) -> ModelParams:
        return ModelParams(self.arch, self.vector.copy())


def config_hash(config: dict) -> str:
    """SHA-256 of the canonical JSON form of ``config``."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def dumps_checkpoint(params: ModelParams, meta: dict | None = None) -> str:
    weights = ",".join(_fmt(v) for v in params.vector)
    head = json.dumps({"version": FORMAT_VERSION, "arch": params.arch.to_dict(),
                       "meta": meta or {}}, sort_keys=True)
    # splice the weights in by hand so their formatting is pinned
    return head[:-1] + f', "weights": [{weights}]}}\n'


def save_checkpoint(path, params: ModelParams, meta: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_checkpoint(params, meta))
    return path


def loads_checkpoint(text: str) -> Checkpoint:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"checkpoint is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise FormatError("checkpoint must be a JSON object")
    missing = {"version", "arch", "weights"} - doc.keys()
    if missing:
        raise FormatError(f"checkpoint is missing {sorted(missing)}")
    if doc["version"] != FORMAT_VERSION:
        raise FormatError(f"unsupported checkpoint version {doc['version']!r}")
    try:
        arch = Arch.from_dict(doc["arch"])
        vec = np.asarray(doc["weights"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed checkpoint: {exc}") from exc
    if vec.shape != (arch.size,):
        raise FormatError(f"weight count {vec.size} does not match arch size {arch.size}")
    return Checkpoint(arch, vec, doc["version"], doc.get("meta", {}))


def load_checkpoint(path) -> Checkpoint:
    return loads_checkpoint(Path(path).read_text())
