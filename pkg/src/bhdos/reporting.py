"""Deterministic text output: delimited tables, model files, run manifests.

Floating point values are rendered with repr-exact precision so repeated
runs with the same configuration produce byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from .model import BoseHubbardModel

FLOAT_FMT = "%.17g"


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return FLOAT_FMT % float(x)


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def write_table(path, columns: dict, meta: dict):
    """Comma-delimited table with '#' metadata lines before the header."""
    path = Path(path)
    names = list(columns)
    arrays = [np.atleast_1d(np.asarray(columns[n])) for n in names]
    n_rows = len(arrays[0])
    if any(len(a) != n_rows for a in arrays):
        raise ValueError("columns differ in length")
    lines = [f"# {key} = {value}" for key, value in meta.items()]
    lines.append(",".join(names))
    for i in range(n_rows):
        lines.append(",".join(fmt(a[i]) for a in arrays))
    path.write_text("\n".join(lines) + "\n")


def read_table(path):
    meta = {}
    names = None
    rows = []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].partition("=")
            meta[key.strip()] = value.strip()
        elif names is None:
            names = line.split(",")
        elif line:
            rows.append([float(v) for v in line.split(",")])
    data = np.array(rows) if rows else np.zeros((0, len(names or [])))
    return {n: data[:, i] for i, n in enumerate(names or [])}, meta


def load_model(path) -> BoseHubbardModel:
    return BoseHubbardModel.from_dict(json.loads(Path(path).read_text()))


def save_model(path, model: BoseHubbardModel):
    Path(path).write_text(json.dumps(model.to_dict(), indent=2) + "\n")


def write_manifest(path, subcommand: str, config: dict, started: float, extra: dict | None = None):
    """Run record: configuration echo, library versions, wall time."""
    manifest = {
        "subcommand": subcommand,
        "config": config,
        "config_hash": config_hash(config),
        "versions": {
            "python": sys.version.split()[0],
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "platform": platform.platform(),
        },
        "wall_time_s": round(time.time() - started, 3),
    }
    if extra:
        manifest.update(extra)
    Path(path).write_text(json.dumps(manifest, indent=2, default=str) + "\n")


def table_meta(subcommand: str, config: dict, **kwargs) -> dict:
    meta = {"generator": "bhdos " + subcommand, "config_hash": config_hash(config)}
    meta.update(kwargs)
    return meta
