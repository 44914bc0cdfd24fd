"""Device dossier assembly from per-analysis JSON fragments.

Each analysis subcommand emits a fragment: a JSON object whose top-level
keys name dossier sections (``localization``, ``purity``,
``indistinguishability``, ``efficiency``, ``purcell``, ...). Fragments merge
into one dossier independent of arrival order; colliding scalar sections
must be identical or the merge fails.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Iterable

SCHEMA_VERSION = 1


def write_json_atomic(path, payload: dict) -> None:
    """Write JSON via a temporary file and rename, so readers never see a
    partial document."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."),
                               prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _merge(dst: dict, src: dict, origin: str) -> None:
    for key, value in src.items():
        if key not in dst:
            dst[key] = value
        elif isinstance(dst[key], dict) and isinstance(value, dict):
            _merge(dst[key], value, origin)
        elif dst[key] != value:
            raise ValueError(
                f"{origin}: section '{key}' conflicts with an earlier fragment")


def assemble_dossier(fragment_paths: Iterable, device: str = "") -> dict:
    """Merge fragment files into one dossier document."""
    dossier: dict = {}
    for path in sorted(Path(p) for p in fragment_paths):
        try:
            fragment = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: not valid JSON ({exc})") from exc
        if not isinstance(fragment, dict):
            raise ValueError(f"{path}: fragment must be a JSON object")
        fragment = dict(fragment)
        fragment.pop("schema_version", None)
        _merge(dossier, fragment, str(path))
    out = {"schema_version": SCHEMA_VERSION}
    if device:
        out["device"] = device
    out.update(dict(sorted(dossier.items())))
    return out
