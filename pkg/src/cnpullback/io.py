"""CSV/JSON helpers shared by every module that writes files."""
import csv
import json
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1


def write_csv(path, columns):
    """Write equal-length columns (dict name -> sequence) with a leading schema_version column.

    Floats are written with ``repr`` so re-reading is lossless.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = list(columns)
    cols = [np.asarray(columns[n]) for n in names]
    n = len(cols[0]) if cols else 0
    if any(len(c) != n for c in cols):
        raise ValueError("columns must have equal length")
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["schema_version"] + names)
        for i in range(n):
            w.writerow([SCHEMA_VERSION] + [_fmt(c[i]) for c in cols])
    return path


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def read_csv(path):
    """Read a CSV written by :func:`write_csv` into a dict of float arrays."""
    with Path(path).open() as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if header[0] != "schema_version":
        raise ValueError(f"{path}: missing schema_version column")
    versions = {int(r[0]) for r in body}
    if versions - {SCHEMA_VERSION}:
        raise ValueError(f"{path}: unsupported schema version {sorted(versions)}")
    data = np.array([[float(v) for v in r[1:]] for r in body]).reshape(len(body), len(header) - 1)
    return {name: data[:, j] for j, name in enumerate(header[1:])}


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")
