"""CSV tables, resolved config and run manifest."""

from __future__ import annotations

import csv
import json
import subprocess
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__
from .config import ExperimentConfig, dump_config


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        # shortest representation that round-trips
        return repr(float(v))
    return str(v)


def build_id() -> str:
    try:
        rev = subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"], capture_output=True, text=True, timeout=5,
            cwd=Path(__file__).resolve().parent,
        ).stdout.strip()
    except (OSError, subprocess.SubprocessError):
        rev = ""
    return f"icdenoise-{__version__}" + (f"+g{rev}" if rev else "")


@dataclass
class RunArtifacts:
    out_dir: Path
    config: ExperimentConfig
    tables: dict[str, list[dict]] = field(default_factory=dict)
    files: list[str] = field(default_factory=list)
    wall_time: float = 0.0

    def table(self, name: str) -> list[dict]:
        return self.tables[name]


class ArtifactWriter:
    def __init__(self, cfg: ExperimentConfig, out_dir: str | Path):
        self.out = Path(out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.cfg = cfg
        self.run = RunArtifacts(self.out, cfg)
        self._t0 = time.perf_counter()
        self._write_text("config.json", dump_config(cfg))

    def _write_text(self, name: str, text: str) -> None:
        (self.out / name).write_text(text)
        if name not in self.run.files:
            self.run.files.append(name)

    def table(self, name: str, columns: list[str], rows: list[dict]) -> None:
        path = self.out / f"{name}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            for r in rows:
                w.writerow([_fmt(r[c]) for c in columns])
        self.run.tables[name] = rows
        if path.name not in self.run.files:
            self.run.files.append(path.name)

    def finish(self) -> RunArtifacts:
        self.run.wall_time = time.perf_counter() - self._t0
        manifest = {
            "experiment": self.cfg.experiment,
            "files": sorted(self.run.files + ["manifest.json"]),
            "seeds": list(self.cfg.seeds),
            "build": build_id(),
            "wall_time_s": round(self.run.wall_time, 3),
        }
        self._write_text("manifest.json", json.dumps(manifest, indent=2) + "\n")
        return self.run


def read_csv(path: str | Path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
