"""Deterministic artifact writers: CSV with fixed float formatting, JSON."""

from __future__ import annotations

import json
import os
import tempfile

import numpy as np

FLOAT_FMT = "%.17g"


def _atomic_write(path, data: bytes):
    path = os.fspath(path)
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp_", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path, header, rows):
    """CSV with a header row and 17-significant-digit floats."""
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(FLOAT_FMT % v for v in row))
    _atomic_write(path, ("\n".join(lines) + "\n").encode())


def write_json(path, obj):
    _atomic_write(path, (json.dumps(obj, sort_keys=True, indent=2) + "\n").encode())


def read_csv(path):
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data
