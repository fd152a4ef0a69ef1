"""Deterministic report serialization: every JSON report embeds the tool
version, the run seed, and a hash of the effective configuration, so equal
inputs produce byte-identical outputs."""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

SCHEMA_VERSION = 1


def tool_version() -> str:
    from . import __version__
    return __version__


def config_hash(config: dict) -> str:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def write_json_report(path, payload: dict, seed, config: dict) -> None:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "tool_version": tool_version(),
        "seed": seed,
        "config_hash": config_hash(config),
    }
    doc.update(payload)
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def write_csv(path, header, rows) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v
