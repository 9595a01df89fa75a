"""CSV / JSON writers.  Every file carries the resolved config and the bath hash.

CSV files start with ``#`` comment lines (``# config: {...}``,
``# bath_hash: ...``, ``# summary: {...}``) followed by a header row.
Nothing time-dependent is written, so identical runs give identical files.
"""
from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_table(path: str | Path, columns, rows, *, config: dict, bath_hash: str | None = None,
                summary: dict | None = None, fmt: str = "csv") -> Path:
    """Write rows (sequences matching ``columns``) with provenance; returns the path written."""
    path = Path(path).with_suffix("." + fmt)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "json":
        doc = {"config": config, "bath_hash": bath_hash, "summary": summary or {},
               "columns": list(columns), "rows": [list(r) for r in rows]}
        path.write_text(json.dumps(_clean(doc), indent=1, sort_keys=True) + "\n")
        return path
    if fmt != "csv":
        raise ValueError(f"unknown format {fmt!r}")
    buf = io.StringIO()
    buf.write(f"# config: {_dumps(config)}\n")
    buf.write(f"# bath_hash: {bath_hash or ''}\n")
    buf.write(f"# summary: {_dumps(summary or {})}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(x) for x in r])
    path.write_text(buf.getvalue())
    return path


def read_table(path: str | Path) -> dict:
    """Inverse of :func:`write_table` (values come back as floats where possible)."""
    path = Path(path)
    if path.suffix == ".json":
        return json.loads(path.read_text())
    meta: dict = {}
    lines = path.read_text().splitlines()
    body = []
    for ln in lines:
        if ln.startswith("# ") and ":" in ln and not body:
            key, val = ln[2:].split(":", 1)
            val = val.strip()
            meta[key] = json.loads(val) if val.startswith("{") else val
        else:
            body.append(ln)
    rdr = list(csv.reader(body))

    def num(s):
        if s == "":
            return None
        try:
            return float(s)
        except ValueError:
            return s

    return {"config": meta.get("config"), "bath_hash": meta.get("bath_hash"),
            "summary": meta.get("summary"), "columns": rdr[0], "rows": [[num(x) for x in r] for r in rdr[1:]]}


def curve_columns(curves: dict) -> tuple[list[str], list[list]]:
    """Columns t, |L| and sigma for each labelled curve on a common time grid."""
    labels = list(curves)
    t = curves[labels[0]].timepoints
    cols = ["t"]
    for lab in labels:
        cols += [f"L_{lab}", f"sigma_{lab}"]
    rows = []
    for i, ti in enumerate(t):
        row = [float(ti)]
        for lab in labels:
            c = curves[lab]
            row += [float(c.values[i]), float(c.sigma[i]) if c.sigma is not None else 0.0]
        rows.append(row)
    return cols, rows
