"""CSV and JSON readers/writers for matrices, data and fitted models.

Floats are written with ``repr`` (shortest round-trip form), so a write
followed by a read reproduces every value bit for bit.
"""

from __future__ import annotations

import csv
import io
import json
import sys

import numpy as np

from .model import SVARModel, TimeSeriesSample


def _fmt(x):
    return repr(float(x))


def write_matrix_csv(path, M):
    """Headerless, row-major CSV."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        for row in M:
            wr.writerow([_fmt(v) for v in row])


def read_matrix_csv(path):
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    try:
        return np.array([[float(v) for v in r] for r in rows], dtype=float)
    except ValueError as exc:
        raise ValueError(f"{path}: malformed numeric CSV ({exc})") from exc


def write_data_csv(path, sample):
    data = sample.data if isinstance(sample, TimeSeriesSample) else np.asarray(sample)
    names = getattr(sample, "names", None) or [f"x{k + 1}" for k in range(data.shape[1])]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(names)
        for row in data:
            wr.writerow([_fmt(v) for v in row])


def read_data_csv(path):
    """Data CSV with a header row of variable names."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty data file") from None
        rows = [r for r in reader if r]
    try:
        float(header[0])
    except ValueError:
        pass
    else:
        raise ValueError(f"{path}: data CSV needs a header row of variable names")
    try:
        data = np.array([[float(v) for v in r] for r in rows], dtype=float)
    except ValueError as exc:
        raise ValueError(f"{path}: malformed numeric CSV ({exc})") from exc
    if data.ndim != 2 or data.shape[1] != len(header):
        raise ValueError(f"{path}: rows do not match the {len(header)} header columns")
    return TimeSeriesSample(data, names=[h.strip() for h in header])


def model_to_dict(model):
    return {
        "p": model.p,
        "d": model.d,
        "A": model.A.tolist(),
        "B": [b.tolist() for b in model.B],
    }


def model_from_dict(obj):
    model = SVARModel(np.array(obj["A"], dtype=float),
                      [np.array(b, dtype=float) for b in obj["B"]])
    if obj.get("p", model.p) != model.p or obj.get("d", model.d) != model.d:
        raise ValueError("model JSON p/d fields disagree with the matrices")
    return model


def write_model_json(path, model, extra=None):
    obj = model_to_dict(model)
    if extra:
        obj.update(extra)
    text = json.dumps(obj, indent=1)
    if path == "-":
        sys.stdout.write(text + "\n")
    else:
        with open(path, "w") as fh:
            fh.write(text + "\n")


def read_model_json(path):
    with open(path) as fh:
        return model_from_dict(json.load(fh))


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def write_long_csv(path, M, value_name="value"):
    """Long-format ``child,parent,value`` listing of the nonzero cells (1-based)."""
    M = np.asarray(M, dtype=float)
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["child", "parent", value_name])
    for i, j in zip(*np.nonzero(M)):
        wr.writerow([i + 1, j + 1, _fmt(M[i, j])])
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())
