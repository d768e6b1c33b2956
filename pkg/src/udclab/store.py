"""Systems on disk: a directory with ``manifest.json`` and one trace per run."""

from __future__ import annotations

import json
from pathlib import Path

from .model import Provenance, SystemOfRuns, read_trace, write_trace

FORMAT = "udc-system/1"
MANIFEST = "manifest.json"


def write_system(system: SystemOfRuns, directory: str | Path) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    names = []
    for i, run in enumerate(system.runs):
        name = f"run-{i:05d}.trace"
        write_trace(run, d / name)
        names.append(name)
    manifest = {
        "format": FORMAT,
        "n": system.n,
        "provenance": system.provenance.value,
        "meta": system.meta,
        "runs": names,
    }
    (d / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return d


def read_system(path: str | Path) -> SystemOfRuns:
    """Load a system directory, or wrap a single trace file as a one-run sampled system."""
    p = Path(path)
    if p.is_file():
        run = read_trace(p)
        return SystemOfRuns(run.n, (run,), Provenance.SAMPLED, {"source": str(p)})
    manifest_path = p / MANIFEST
    if not manifest_path.exists():
        raise ValueError(f"{p} is neither a trace file nor a system directory")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    if manifest.get("format") != FORMAT:
        raise ValueError(f"unsupported system format {manifest.get('format')!r}")
    runs = tuple(read_trace(p / name) for name in manifest["runs"])
    return SystemOfRuns(manifest["n"], runs, Provenance(manifest["provenance"]), manifest.get("meta", {}))
