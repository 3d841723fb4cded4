"""Per-invocation run manifest: what ran, on what, what it produced, and how long each stage took."""

from __future__ import annotations

import json
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional

from .sim import sha256_file

MANIFEST_NAME = "run_manifest.json"


@dataclass
class Artifact:
    path: str
    sha256: str
    bytes: int


@dataclass
class RunManifest:
    subcommand: str
    config_digest: str = ""
    seed: Optional[int] = None
    inputs: list[str] = field(default_factory=list)
    out_dir: Optional[str] = None
    artifacts: list[Artifact] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)
    errors: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def add_artifact(self, path: str | Path) -> None:
        p = Path(path)
        self.artifacts.append(Artifact(str(p), sha256_file(p), p.stat().st_size))

    @contextmanager
    def stage(self, name: str) -> Iterator[None]:
        """Time a stage; an exception is recorded as an error and re-raised."""
        t0 = time.perf_counter()
        try:
            yield
        except Exception as exc:
            self.errors.append(f"{name}: {type(exc).__name__}: {exc}")
            raise
        finally:
            self.timings[name] = time.perf_counter() - t0

    def to_dict(self) -> dict:
        return {
            "subcommand": self.subcommand,
            "config_digest": self.config_digest,
            "seed": self.seed,
            "inputs": self.inputs,
            "out_dir": self.out_dir,
            "artifacts": [vars(a) for a in sorted(self.artifacts, key=lambda a: a.path)],
            "timings_s": self.timings,
            "errors": self.errors,
        }

    def write(self, out_dir: str | Path) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        path = out / MANIFEST_NAME
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")
        return path
