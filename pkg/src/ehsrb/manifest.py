"""Run manifests: reproducibility record for every CLI artifact."""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    flags: dict
    seed: int
    config: dict
    version: str
    wall_time: float = 0.0
    outputs: dict = field(default_factory=dict)

    @property
    def digest(self) -> str:
        """Identity of the run inputs (excludes wall time and outputs)."""
        core = {
            "command": self.command,
            "flags": self.flags,
            "seed": self.seed,
            "config": self.config,
            "version": self.version,
        }
        return hashlib.sha256(_canonical(core).encode()).hexdigest()

    def register(self, path: Path) -> None:
        self.outputs[path.name] = sha256_file(path)

    def write(self, outdir: Path) -> Path:
        data = {
            "command": self.command,
            "flags": self.flags,
            "seed": self.seed,
            "config": self.config,
            "version": self.version,
            "wall_time": self.wall_time,
            "outputs": self.outputs,
            "digest": self.digest,
        }
        path = outdir / "manifest.json"
        path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
        return path


def check_resume(outdir: Path, manifest: RunManifest) -> None:
    """Refuse to overwrite a run whose manifest digest differs."""
    existing = outdir / "manifest.json"
    if not existing.exists():
        return
    try:
        old = json.loads(existing.read_text())
    except json.JSONDecodeError:
        raise RuntimeError(f"unreadable manifest at {existing}")
    if old.get("digest") != manifest.digest:
        raise RuntimeError(
            f"output dir {outdir} holds a run with a different manifest digest; "
            "refusing to overwrite (use a fresh --out)"
        )


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0
        return False
