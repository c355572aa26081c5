# skyrelay/reporting.py

"""
Result files written by the management commands.

Floats are printed with 9 significant digits and rows keep the order they
were produced in, so the same command and seed give byte-identical files.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Sequence

import numpy as np

from skyrelay import __version__
from skyrelay.params import SystemParams, serialize

logger = logging.getLogger(__name__)

FORMATS = ("csv", "json")


def format_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        return f"{v:.9g}"
    return str(value)


def _json_value(value: Any) -> Any:
    if isinstance(value, Mapping):
        return {str(k): _json_value(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_value(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return float(f"{v:.9g}") if math.isfinite(v) else None
    return value


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Mapping[str, Any]]) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(row.get(name)) for name in header])
    logger.info("Wrote %s", path)
    return path


def write_json(path: Path, payload: Any) -> Path:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(_json_value(payload), f, indent=2, sort_keys=True)
        f.write("\n")
    logger.info("Wrote %s", path)
    return path


def write_table(
    out_dir: Path,
    name: str,
    header: Sequence[str],
    rows: List[Mapping[str, Any]],
    fmt: str = "csv",
) -> Path:
    """Writes ``rows`` as ``<name>.csv`` or as ``<name>.json`` (a list of objects)."""
    if fmt == "json":
        return write_json(out_dir / f"{name}.json", [{k: row.get(k) for k in header} for row in rows])
    return write_csv(out_dir / f"{name}.csv", header, rows)


def manifest(
    command: str, params: SystemParams, seed: int, arguments: Mapping[str, Any]
) -> Dict[str, Any]:
    """Everything needed to rerun ``command`` and reproduce its files."""
    return {
        "command": command,
        "version": __version__,
        "seed": seed,
        "arguments": dict(arguments),
        "config": serialize(params),
    }


def write_manifest(out_dir: Path, payload: Mapping[str, Any]) -> Path:
    return write_json(out_dir / "manifest.json", payload)
