"""CSV ingestion and deterministic CSV/JSON output.

Data files are UTF-8 CSV with a mandatory header.  Recognised columns:

* ``x_1 .. x_d``   feature coordinates (required, contiguous from 1)
* ``y`` or ``y_1 .. y_p``   observed response
* ``pit`` / ``hpd``   precomputed statistic values in [0, 1]

Other columns (for example ``group`` in simulated files) are carried along
untouched.  Floats are written with ``repr`` so reruns are byte-identical.
"""
from __future__ import annotations

import csv
import json
import math
import re
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

__all__ = ["InputError", "Table", "read_table", "write_csv", "write_json", "load_schema"]

_INDEXED = re.compile(r"^([xy])_(\d+)$")


class InputError(ValueError):
    """Malformed input file; ``line`` is 1-based (header is line 1)."""

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = f"{path}:" if path else ""
        where += f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{message}")


@dataclass
class Table:
    features: np.ndarray
    response: np.ndarray | None = None
    statistic: np.ndarray | None = None
    statistic_kind: str | None = None
    extra: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.features.shape[0]


def _indexed_columns(header, prefix, path):
    found = {}
    for pos, name in enumerate(header):
        m = _INDEXED.match(name)
        if m and m.group(1) == prefix:
            found[int(m.group(2))] = pos
    if found and sorted(found) != list(range(1, len(found) + 1)):
        raise InputError(f"columns {prefix}_1..{prefix}_{len(found)} must be contiguous",
                         line=1, path=path)
    return [found[i] for i in sorted(found)]


def read_table(path, require_response=False, require_statistic=False) -> Table:
    """Parse a data, calibration or evaluation-point CSV."""
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot open: {exc.strerror}", path=str(path)) from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise InputError("missing header", line=1, path=str(path))
        header = [h.strip() for h in header]
        x_cols = _indexed_columns(header, "x", str(path))
        if not x_cols:
            raise InputError("header has no x_1.. feature columns", line=1, path=str(path))
        y_cols = _indexed_columns(header, "y", str(path))
        if "y" in header:
            if y_cols:
                raise InputError("use either y or y_1..y_p, not both", line=1, path=str(path))
            y_cols = [header.index("y")]
        stat_kind = None
        for kind in ("pit", "hpd"):
            if kind in header:
                if stat_kind is not None:
                    raise InputError("file has both pit and hpd columns", line=1, path=str(path))
                stat_kind = kind
        if require_response and not y_cols and stat_kind is None:
            raise InputError("header needs a y column or a pit/hpd column",
                             line=1, path=str(path))
        if require_statistic and stat_kind is None:
            raise InputError("header needs a pit or hpd column", line=1, path=str(path))
        used = set(x_cols) | set(y_cols) | ({header.index(stat_kind)} if stat_kind else set())
        extra_cols = [i for i in range(len(header)) if i not in used]

        X, Yv, S = [], [], []
        extra = {header[i]: [] for i in extra_cols}
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise InputError(f"expected {len(header)} fields, found {len(row)}",
                                 line=line_no, path=str(path))
            try:
                xs = [float(row[i]) for i in x_cols]
                ys = [float(row[i]) for i in y_cols]
                st = float(row[header.index(stat_kind)]) if stat_kind else None
            except ValueError as exc:
                raise InputError(f"non-numeric value ({exc})", line=line_no,
                                 path=str(path)) from None
            if not all(math.isfinite(v) for v in xs):
                raise InputError("feature values must be finite", line=line_no, path=str(path))
            if not all(math.isfinite(v) for v in ys):
                raise InputError("response values must be finite", line=line_no, path=str(path))
            if st is not None and not 0.0 <= st <= 1.0:
                raise InputError(f"{stat_kind} value {st!r} outside [0, 1]",
                                 line=line_no, path=str(path))
            X.append(xs)
            Yv.append(ys)
            S.append(st)
            for i in extra_cols:
                extra[header[i]].append(row[i])
    if not X:
        raise InputError("no data rows", line=2, path=str(path))
    features = np.array(X, dtype=float)
    response = None
    if y_cols:
        response = np.array(Yv, dtype=float)
        if len(y_cols) == 1 and header[y_cols[0]] == "y":
            response = response[:, 0]
    statistic = np.array(S, dtype=float) if stat_kind else None
    return Table(features, response, statistic, stat_kind, extra)


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def load_schema(name: str) -> dict:
    """Bundled JSON schema, e.g. ``load_schema("gct")``."""
    text = resources.files("cdediag").joinpath("schemas", f"{name}.schema.json").read_text("utf-8")
    return json.loads(text)
