"""Atomic file output, the g2 CSV contract and JSON reports."""

from __future__ import annotations

import dataclasses
import json
import os
import subprocess
import tempfile
from functools import lru_cache
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .correlations import CorrelationSeries

OUT_ENV = "CAVITYG2_OUT"
DEFAULT_OUT = "cavityg2-out"
CSV_COLUMNS = ("tau_kappa", "g2", "stderr")


def default_output_dir() -> Path:
    return Path(os.environ.get(OUT_ENV) or DEFAULT_OUT)


@lru_cache(maxsize=1)
def artifact_version() -> str:
    """Package version plus ``git describe`` of the source tree when available."""
    here = Path(__file__).resolve().parent
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=here, capture_output=True, text=True, timeout=5, check=True,
        ).stdout.strip()
    except (OSError, subprocess.SubprocessError):
        out = ""
    return f"{__version__}+{out}" if out else __version__


def atomic_write_bytes(path: str | Path, data: bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    return path


def atomic_write_text(path: str | Path, text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


def fmt(x: float) -> str:
    """Shortest decimal string that round-trips to the same double."""
    return repr(float(x))


def to_jsonable(obj: Any) -> Any:
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return to_jsonable(dataclasses.asdict(obj))
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if np.isfinite(x) else str(x)
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": float(obj.real), "im": float(obj.imag)}
    if isinstance(obj, Path):
        return str(obj)
    return obj


def dumps_json(obj: Any) -> str:
    return json.dumps(to_jsonable(obj), indent=2, sort_keys=True) + "\n"


def write_json(path: str | Path, obj: Any) -> Path:
    return atomic_write_text(path, dumps_json(obj))


def series_csv(series: CorrelationSeries, metadata: dict[str, Any]) -> str:
    """CSV text: ``# key: <json>`` comment lines, a header, then one row per tau."""
    meta = {"artifact_version": artifact_version(), "method": series.method, **metadata}
    lines = [f"# {k}: {json.dumps(to_jsonable(v), sort_keys=True)}" for k, v in meta.items()]
    lines.append(",".join(CSV_COLUMNS))
    lines += [f"{fmt(t)},{fmt(g)},{fmt(e)}" for t, g, e in zip(series.tau, series.g2, series.stderr)]
    return "\n".join(lines) + "\n"


def write_series_csv(path: str | Path, series: CorrelationSeries, metadata: dict[str, Any]) -> Path:
    return atomic_write_text(path, series_csv(series, metadata))


def read_series_csv(path: str | Path) -> tuple[CorrelationSeries, dict[str, Any]]:
    meta: dict[str, Any] = {}
    rows = []
    header = None
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            key, _, raw = line[1:].strip().partition(": ")
            meta[key] = json.loads(raw)
        elif header is None:
            header = tuple(line.strip().split(","))
            if header != CSV_COLUMNS:
                raise ValueError(f"{path}: expected columns {CSV_COLUMNS}, got {header}")
        elif line.strip():
            rows.append([float(v) for v in line.split(",")])
    data = np.array(rows, dtype=float).reshape(-1, 3)
    series = CorrelationSeries(data[:, 0], data[:, 1], data[:, 2], meta.get("method", "unknown"), meta)
    return series, meta
