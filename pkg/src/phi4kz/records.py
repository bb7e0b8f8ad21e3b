"""Result persistence: line-delimited records and columnar tables.

Records are append-only JSON lines carrying the manifest hash; columnar
tables are tab-separated text for plotting.  Existing outputs are never
overwritten without an explicit flag.
"""

from __future__ import annotations

import json
import os

from .errors import ConfigurationError


def _guard_overwrite(path, overwrite):
    if os.path.exists(path) and not overwrite:
        raise ConfigurationError(
            f"refusing to overwrite existing output {path}; pass overwrite")


def write_records(path, records, manifest_hash: str, overwrite: bool = False):
    """One JSON object per line, each stamped with the manifest hash."""
    _guard_overwrite(path, overwrite)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as fh:
        for rec in records:
            row = dict(rec)
            row["manifest_hash"] = manifest_hash
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def append_record(path, record, manifest_hash: str):
    row = dict(record)
    row["manifest_hash"] = manifest_hash
    with open(path, "a") as fh:
        fh.write(json.dumps(row, sort_keys=True) + "\n")


def read_records(path):
    if not os.path.exists(path):
        raise ConfigurationError(f"record file not found: {path}")
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out


def write_table(path, header, rows, overwrite: bool = False):
    """Tab-separated columnar table with a '#'-prefixed header line."""
    _guard_overwrite(path, overwrite)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as fh:
        fh.write("#" + "\t".join(header) + "\n")
        for row in rows:
            fh.write("\t".join(_fmt(v) for v in row) + "\n")


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)
