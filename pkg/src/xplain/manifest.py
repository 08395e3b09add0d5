"""Run manifests: one JSON per output directory.

The manifest captures the fully resolved config, seeds, and artifact list,
so a run can be reproduced by pointing the same command at the manifest
(``--config manifest.json``). Timestamps live only here; the data artifacts
themselves stay byte-reproducible.
"""

from __future__ import annotations

import json
from datetime import datetime, timezone
from pathlib import Path

from . import __version__

MANIFEST_NAME = "manifest.json"


def write_manifest(out_dir, command: str, config: dict, seeds: dict,
                   artifacts, started_at: str, extra: dict = None) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {
        "command": command,
        "config": config,
        "seeds": seeds,
        "artifacts": sorted(str(Path(a).relative_to(out_dir)) for a in artifacts),
        "version": __version__,
        "started_at": started_at,
        "finished_at": now_iso(),
    }
    if extra:
        payload["extra"] = extra
    path = out_dir / MANIFEST_NAME
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def load_manifest(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def now_iso() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")
