"""Deterministic CSV/JSON writers and staged (all-or-nothing) output sets."""

from __future__ import annotations

import csv
import json
import math
import os
from pathlib import Path

import numpy as np

PARTIAL_SUFFIX = ".partial"


class OutputSet:
    """Collects output files under ``root``; each is written as ``<name>.partial``
    and renamed to its final name only by :meth:`commit`."""

    def __init__(self, root):
        self.root = Path(root)
        self.files: list[Path] = []

    def path(self, name: str) -> Path:
        final = self.root / name
        final.parent.mkdir(parents=True, exist_ok=True)
        if final in self.files:
            raise ValueError(f"output {name} registered twice")
        self.files.append(final)
        return final.with_name(final.name + PARTIAL_SUFFIX)

    def commit(self) -> list[Path]:
        for final in self.files:
            os.replace(final.with_name(final.name + PARTIAL_SUFFIX), final)
        return list(self.files)


def as_output_set(out) -> tuple[OutputSet, bool]:
    """Wrap a directory in an OutputSet; the flag says whether the caller owns the commit."""
    if isinstance(out, OutputSet):
        return out, False
    return OutputSet(out), True


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, columns, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in columns])
    return path


def read_csv(path) -> list[dict[str, str]]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items() if not str(k).startswith("_")}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, Path):
        return str(obj)
    return obj


def to_json(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(to_json(obj))
    return path
