"""Reproducibility plumbing: digests, canonical JSON, atomic writes.

Output artifacts never contain timestamps or environment data, only the
tool version, the run seed and input digests, so re-running a command with
identical inputs reproduces byte-identical files. CSV artifacts keep the
canonical table format and carry their provenance in a ``<name>.meta.json``
sidecar instead.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path


def tool_version() -> str:
    from . import __version__

    return __version__


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def canonical_json(obj) -> str:
    """Deterministic, human-readable JSON text (sorted keys, LF, indent 2)."""
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def atomic_write_text(path, text: str) -> None:
    """Write via temp file + rename so readers never see partial output."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def write_json_artifact(path, payload: dict, *, seed: int, inputs: dict[str, str]) -> None:
    """Write a JSON artifact with the standard provenance envelope."""
    doc = {
        "tool_version": tool_version(),
        "seed": seed,
        "input_digests": dict(sorted(inputs.items())),
        **payload,
    }
    atomic_write_text(path, canonical_json(doc))


def write_csv_artifact(path, text: str, *, seed: int, inputs: dict[str, str]) -> None:
    """Write a CSV artifact plus its ``.meta.json`` provenance sidecar."""
    path = Path(path)
    atomic_write_text(path, text)
    meta = {
        "artifact": path.name,
        "artifact_sha256": hashlib.sha256(text.encode("utf-8")).hexdigest(),
        "tool_version": tool_version(),
        "seed": seed,
        "input_digests": dict(sorted(inputs.items())),
    }
    atomic_write_text(path.with_name(path.name + ".meta.json"), canonical_json(meta))
