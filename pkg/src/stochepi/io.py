"""CSV and JSON serialisation of trajectories, observations, chains and bands.

CSV files are UTF-8 with a header row and LF line endings.  Reals are
written with 17 significant digits so they read back to the same double;
integer columns are written without a decimal point.
"""

import csv
import json
import math
from pathlib import Path

import numpy as np

from .exceptions import ParseError
from .inference.mh import Chain
from .models import Trajectory
from .observation import ObservedSeries


def format_value(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.17g}"


def write_table(path, header, columns):
    """Write equal-length ``columns`` under ``header``.

    A column keeps its own type: integer arrays are written as integers.
    """
    columns = [np.asarray(c) for c in columns]
    if len(header) != len(columns):
        raise ValueError("one header name per column")
    n = len(columns[0]) if columns else 0
    if any(len(c) != n for c in columns):
        raise ValueError("columns differ in length")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(n):
            w.writerow([format_value(c[i]) for c in columns])


def _parse_number(token, filename, line):
    try:
        if token.lstrip("+-").isdigit():
            return int(token), True
        return float(token), False
    except ValueError:
        raise ParseError(filename, line, f"not a number: {token!r}") from None


def read_table(path, required=None):
    """Read a numeric CSV; returns ``(header, columns)``.

    Columns whose every entry is an integer literal come back as ``int64``,
    the rest as ``float64``.
    """
    name = str(path)
    try:
        fh = open(path, encoding="utf-8", newline="")
    except OSError as err:
        raise ParseError(name, 0, err.strerror) from None
    with fh:
        rows = list(csv.reader(fh))
    if not rows or not rows[0]:
        raise ParseError(name, 1, "missing header row")
    header = [h.strip() for h in rows[0]]
    if len(set(header)) != len(header):
        raise ParseError(name, 1, "duplicate column names")
    if required is not None:
        missing = [c for c in required if c not in header]
        if missing:
            raise ParseError(name, 1, f"missing columns {missing}")
    values = [[] for _ in header]
    ints = [True] * len(header)
    for line, row in enumerate(rows[1:], start=2):
        if not row:
            raise ParseError(name, line, "empty line")
        if len(row) != len(header):
            raise ParseError(name, line, f"expected {len(header)} fields, got {len(row)}")
        for j, token in enumerate(row):
            v, is_int = _parse_number(token.strip(), name, line)
            values[j].append(v)
            ints[j] &= is_int
    cols = [np.array(v, dtype=np.int64 if ok else np.float64) for v, ok in zip(values, ints)]
    return header, cols


def write_trajectory(path, traj):
    write_table(path, ["t", *traj.compartments],
                [traj.times, *(traj.states[:, c] for c in range(traj.states.shape[1]))])


def read_trajectory(path, compartments=None):
    """Read a hidden-trajectory CSV (``t`` then one column per compartment)."""
    header, cols = read_table(path, ["t"])
    if header[0] != "t":
        raise ParseError(str(path), 1, "first column must be 't'")
    names = tuple(header[1:])
    if compartments is not None and names != tuple(compartments):
        raise ParseError(str(path), 1, f"expected compartments {tuple(compartments)}, got {names}")
    if not names:
        raise ParseError(str(path), 1, "no compartment columns")
    if len(cols[0]) == 0:
        raise ParseError(str(path), 2, "no data rows")
    integer = all(c.dtype == np.int64 for c in cols[1:])
    states = np.column_stack(cols[1:]).astype(np.int64 if integer else np.float64)
    times = cols[0].astype(np.float64)
    bad = np.flatnonzero(np.diff(times) <= 0)
    if bad.size:
        raise ParseError(str(path), int(bad[0]) + 3, "times must be strictly increasing")
    return Trajectory(times, states, names, "grid")


def write_observed(path, series):
    values = series.values
    cols = [values[:, j] for j in range(values.shape[1])]
    if all(np.all(c == np.round(c)) for c in cols) and series.integer:
        cols = [c.astype(np.int64) for c in cols]
    write_table(path, ["t", *series.columns], [series.times, *cols])


def read_observed(path):
    header, cols = read_table(path, ["t"])
    if header[0] != "t" or len(header) < 2:
        raise ParseError(str(path), 1, "expected 't' followed by observed columns")
    if len(cols[0]) == 0:
        raise ParseError(str(path), 2, "no data rows")
    times = cols[0].astype(np.float64)
    bad = np.flatnonzero(np.diff(times) <= 0)
    if bad.size:
        raise ParseError(str(path), int(bad[0]) + 3, "times must be strictly increasing")
    integer = all(c.dtype == np.int64 for c in cols[1:])
    return ObservedSeries(times, np.column_stack(cols[1:]).astype(np.float64), tuple(header[1:]),
                          integer=integer)


def write_chain(path, chain):
    """``step, <theta columns>, log_target, accepted`` with one row per state."""
    n = len(chain)
    write_table(path, ["step", *chain.names, "log_target", "accepted"],
                [np.arange(n), *(chain.samples[:, j] for j in range(chain.samples.shape[1])),
                 chain.log_target, chain.accepted.astype(np.int64)])


def read_chain(path):
    header, cols = read_table(path, ["step", "log_target", "accepted"])
    if header[0] != "step" or header[-2:] != ["log_target", "accepted"]:
        raise ParseError(str(path), 1, "expected step, parameters..., log_target, accepted")
    names = tuple(header[1:-2])
    if not names:
        raise ParseError(str(path), 1, "no parameter columns")
    samples = np.column_stack([c.astype(np.float64) for c in cols[1:-2]])
    accepted = cols[-1]
    if not np.all((accepted == 0) | (accepted == 1)):
        raise ParseError(str(path), 2 + int(np.flatnonzero((accepted != 0) & (accepted != 1))[0]),
                         "accepted must be 0 or 1")
    return Chain(names, samples, cols[-2].astype(np.float64), accepted.astype(bool))


def write_bands(path, t_grid, bands, compartments, quantiles=("q2.5", "q50", "q97.5")):
    header, cols = ["t"], [np.asarray(t_grid, dtype=float)]
    for c, name in enumerate(compartments):
        for q, label in enumerate(quantiles):
            header.append(f"{name}_{label}")
            cols.append(bands[:, c, q].astype(np.float64))
    write_table(path, header, cols)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, obj):
    """Pretty JSON with sorted keys; non-finite reals become ``null``."""
    Path(path).write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))
