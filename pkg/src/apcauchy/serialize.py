"""CSV/JSON formats for trajectories, trigonometric polynomials and reports."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, is_dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .grid import GridFunction, TimeGrid, TrigPolynomial


def to_jsonable(obj):
    """Plain JSON types; non-finite floats become the strings ``inf``/``-inf``/``nan``."""
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    if is_dataclass(obj) and not isinstance(obj, type):
        return to_jsonable(asdict(obj))
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [to_jsonable(obj.real), to_jsonable(obj.imag)]
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


def dumps(obj) -> str:
    """Deterministic JSON: sorted keys, two-space indent, trailing newline."""
    return json.dumps(to_jsonable(obj), indent=2, sort_keys=True,
                      allow_nan=False, ensure_ascii=False) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(dumps(obj), encoding="utf-8")
    return path


def write_grid_csv(path, gf: GridFunction) -> Path:
    """Header ``t,v0,v1,...``; every float at 17 significant digits."""
    path = Path(path)
    header = ["t"] + [f"v{i}" for i in range(gf.dim)]
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for t, row in zip(gf.t, gf.values):
            w.writerow(["%.17g" % t] + ["%.17g" % v for v in row])
    return path


def read_grid_csv(path) -> GridFunction:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "t":
        raise ValueError(f"{path}: expected a 't,v0,...' header")
    data = np.array(rows[1:], dtype=float)
    if data.shape[0] < 2:
        raise ValueError(f"{path}: need at least two samples")
    t = data[:, 0]
    grid = TimeGrid.from_count(float(t[0]), float(t[-1]), t.size)
    if np.max(np.abs(grid.nodes - t)) > 1e-9 * max(1.0, abs(t).max()):
        raise ValueError(f"{path}: time column is not uniform")
    return GridFunction(grid, data[:, 1:])


def write_column_csv(path, name: str, values) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([name])
        for v in values:
            w.writerow(["%.17g" % v])
    return path


def trig_to_dict(tp: TrigPolynomial) -> dict:
    return {
        "dim": tp.dim,
        "terms": [{"lambda": float(lam), "re": c.real.tolist(), "im": c.imag.tolist()}
                  for lam, c in zip(tp.frequencies, tp.coefficients)],
    }


def trig_from_dict(doc: dict) -> TrigPolynomial:
    try:
        dim = int(doc["dim"])
        terms = doc["terms"]
    except KeyError as exc:
        raise ValueError(f"trigonometric polynomial missing field {exc.args[0]!r}")
    lam, coef = [], []
    for i, term in enumerate(terms):
        for key in ("lambda", "re", "im"):
            if key not in term:
                raise ValueError(f"terms[{i}] missing field {key!r}")
        re = np.atleast_1d(np.asarray(term["re"], dtype=float))
        im = np.atleast_1d(np.asarray(term["im"], dtype=float))
        if re.shape != (dim,) or im.shape != (dim,):
            raise ValueError(f"terms[{i}]: coefficients must have length {dim}")
        lam.append(float(term["lambda"]))
        coef.append(re + 1j * im)
    if not lam:
        raise ValueError("trigonometric polynomial has no terms")
    return TrigPolynomial(lam, np.array(coef))
