"""File formats: sequence JSON, kernel JSON, matrix CSV."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import InputError
from .kernel import DppKernel
from .sequences import FeatureSequence


def read_json(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror or exc}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None


def load_sequences(path) -> list[FeatureSequence]:
    return sequences_from_json(read_json(path), source=str(path))


def sequences_from_json(d, source="input") -> list[FeatureSequence]:
    if not isinstance(d, dict) or not isinstance(d.get("sequences"), list):
        raise InputError(f"{source}: expected an object with a 'sequences' list")
    out = []
    for n, item in enumerate(d["sequences"]):
        if not isinstance(item, dict) or "frames" not in item:
            raise InputError(f"{source}: sequence #{n} needs 'frames'")
        try:
            out.append(FeatureSequence(item["frames"], str(item.get("id", n))))
        except (InputError, ValueError, TypeError) as exc:
            raise InputError(f"{source}: sequence #{n}: {exc}") from None
    return out


def sequences_to_json(seqs) -> dict:
    items = []
    for n, s in enumerate(seqs):
        if isinstance(s, FeatureSequence):
            items.append({"id": s.id or str(n), "frames": s.frames.tolist()})
        else:
            items.append({"id": str(n), "frames": np.asarray(s).tolist()})
    return {"sequences": items}


def load_kernel(path) -> DppKernel:
    return DppKernel.from_json(read_json(path))


def matrix_csv(M) -> str:
    """Row-major CSV with 17 significant digits."""
    M = np.atleast_2d(np.asarray(M, dtype=np.float64))
    return "".join(",".join(format(v, ".17g") for v in row) + "\n" for row in M)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()
