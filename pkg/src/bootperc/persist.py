"""Text rendering and run artifacts on disk: JSONL records, manifests, CSV."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from bootperc.grid import InfectionField, SiteSet, _TEXT_LIMIT, render_text

MANIFEST = "manifest.json"
RECORDS = "records.jsonl"
SUMMARY = "summary.json"
TABLE = "summary.csv"


def render_grid(state: SiteSet | InfectionField, format: str = "text") -> str:
    """``'0'/'1'`` rows for a site set, or per-site times for an infection
    field (``.`` for never infected), highest row first."""
    if format != "text":
        raise ValueError(f"unknown format {format!r}; use SiteSet.to_bytes for binary output")
    if isinstance(state, SiteSet):
        return render_text(state.mask())
    c = state.config
    if max(c.width, c.height) > _TEXT_LIMIT:
        raise ValueError(f"{c.width}x{c.height} is too large for text; use the binary format")
    t = state.time
    done = state.infected
    width = max((len(str(int(v))) for v in t[done]), default=1)
    rows = []
    for y in range(c.height - 1, -1, -1):
        rows.append(" ".join(str(int(v)).rjust(width) if ok else ".".rjust(width)
                             for v, ok in zip(t[y], done[y])))
    return "\n".join(rows)


def parse_field(text: str) -> np.ndarray:
    """Inverse of :func:`render_grid` on an infection field: an int array
    indexed ``[y, x]`` with -1 for never infected."""
    rows = [r.split() for r in text.strip("\n").splitlines()]
    return np.array([[-1 if v == "." else int(v) for v in r] for r in reversed(rows)], dtype=np.int64)


def dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_atomic(path: Path, text: str):
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def write_csv(path: Path, rows: list[dict]):
    buf = io.StringIO()
    if rows:
        cols = list(rows[0])
        for r in rows[1:]:
            cols += [k for k in r if k not in cols]
        w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _cell(v) for k, v in r.items()})
    write_atomic(path, buf.getvalue())


def _cell(v):
    if isinstance(v, (list, tuple, dict)):
        return json.dumps(v, sort_keys=True)
    return v


class ResumeError(RuntimeError):
    pass


@dataclass
class RunManifest:
    """Progress of a run: the config it belongs to, how many records of each
    unit are on disk, and the byte length and sha256 of the records file
    up to that point."""

    config: dict
    code_version: str
    units: dict = field(default_factory=dict)
    records_bytes: int = 0
    records_sha256: str = hashlib.sha256().hexdigest()
    finished: bool = False

    def to_dict(self) -> dict:
        return {"config": self.config, "code_version": self.code_version, "units": self.units,
                "records_bytes": self.records_bytes, "records_sha256": self.records_sha256,
                "finished": self.finished}

    @classmethod
    def from_dict(cls, d: dict) -> "RunManifest":
        return cls(d["config"], d["code_version"], d["units"], d["records_bytes"],
                   d["records_sha256"], d.get("finished", False))


class RecordWriter:
    """Single writer for the JSONL stream that keeps a running checksum and
    checkpoints the manifest."""

    def __init__(self, out: Path, manifest: RunManifest, every: int = 64):
        self.out = out
        self.manifest = manifest
        self.every = every
        self._hash = hashlib.sha256()
        self._pending = 0
        path = out / RECORDS
        if manifest.records_bytes:
            self._hash.update(_prefix(path, manifest.records_bytes))
            if self._hash.hexdigest() != manifest.records_sha256:
                raise ResumeError("records file does not match the manifest checksum")
            with open(path, "r+b") as f:
                f.truncate(manifest.records_bytes)
        else:
            path.write_bytes(b"")
        self._f = open(path, "ab")

    def write_many(self, unit: str, lines: list[str]):
        """Write a whole unit without an intermediate checkpoint."""
        every, self.every = self.every, math.inf
        try:
            for line in lines:
                self.write(unit, line)
        finally:
            self.every = every

    def write(self, unit: str, line: str):
        data = (line + "\n").encode()
        self._f.write(data)
        self._hash.update(data)
        m = self.manifest
        m.records_bytes += len(data)
        m.records_sha256 = self._hash.hexdigest()
        u = m.units.setdefault(unit, {"done": 0, "complete": False})
        u["done"] += 1
        self._pending += 1
        if self._pending >= self.every:
            self.checkpoint()

    def complete(self, unit: str):
        self.manifest.units.setdefault(unit, {"done": 0, "complete": False})["complete"] = True
        self.checkpoint()

    def checkpoint(self):
        self._f.flush()
        os.fsync(self._f.fileno())
        write_atomic(self.out / MANIFEST, dump_json(self.manifest.to_dict()))
        self._pending = 0

    def close(self):
        self.checkpoint()
        self._f.close()


def _prefix(path: Path, n: int) -> bytes:
    with open(path, "rb") as f:
        data = f.read(n)
    if len(data) != n:
        raise ResumeError(f"records file shorter than the {n} bytes recorded in the manifest")
    return data


def load_manifest(out: Path) -> RunManifest | None:
    path = out / MANIFEST
    if not path.exists():
        return None
    return RunManifest.from_dict(json.loads(path.read_text()))


def read_records(out: Path) -> list[str]:
    path = out / RECORDS
    if not path.exists():
        return []
    return path.read_text().splitlines()
