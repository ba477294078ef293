"""CSV/GeoJSON report formatting and run manifests."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

MANIFEST = "manifest.json"


def fmt(value) -> str:
    """Stable text for one CSV cell; floats use 10 significant digits."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "NA"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return "%.10g" % v
    return str(value)


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    for row in rows:
        wr.writerow([fmt(v) for v in row])
    return buf.getvalue()


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class Bundle:
    """Named report files plus short human-readable notes from one run."""

    files: dict[str, str] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def add_csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence]) -> None:
        self.files[name] = csv_text(header, rows)

    def write(self, out_dir: str | Path) -> dict[str, str]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        hashes = {}
        for name in sorted(self.files):
            data = self.files[name].encode("utf-8")
            (out / name).write_bytes(data)
            hashes[name] = hashlib.sha256(data).hexdigest()
        return hashes


def write_manifest(out_dir: str | Path, *, command: str, config: dict, config_hash: str,
                   seed: int, version: str, inputs: dict[str, str], outputs: dict[str, str],
                   extra: dict | None = None) -> Path:
    doc = {"command": command, "version": version, "seed": seed, "config_hash": config_hash,
           "config": config, "inputs": inputs, "outputs": outputs}
    doc.update(extra or {})
    path = Path(out_dir) / MANIFEST
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def read_manifest(path: str | Path) -> dict:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST
    return json.loads(path.read_text(encoding="utf-8"))
