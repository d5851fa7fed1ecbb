"""CSV and JSON readers/writers for curves, fits and diagnostics.

All floats are written with 12 significant digits so reruns are byte-identical.
Files are written to a temporary sibling and renamed into place.
"""
from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from collections import defaultdict
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .grid import AffineWarp, Interval, SampledCurve, UniformGrid

SCHEMA = "sparse-kma/v1"
_GRID_RTOL = 1e-6


class DataError(ValueError):
    """Malformed or inconsistent input data."""


def fmt(x) -> str:
    x = float(x)
    if np.isnan(x):
        return "nan"
    return "%.12g" % x


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_rows(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    for row in rows:
        wr.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    atomic_write_text(path, buf.getvalue())


def _read_dicts(path, required: Sequence[str]) -> list[dict]:
    try:
        with open(path, newline="") as fh:
            rd = csv.DictReader(fh)
            if rd.fieldnames is None:
                raise DataError(f"{path}: empty file, header required")
            fields = [f.strip() for f in rd.fieldnames]
            missing = [c for c in required if c not in fields]
            if missing:
                raise DataError(f"{path}: missing columns {missing}")
            rows = []
            for row in rd:
                rows.append({k.strip(): (v.strip() if v is not None else v) for k, v in row.items() if k})
            return rows
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}") from e


def _float(s, path, line, col) -> float:
    try:
        return float(s)
    except (TypeError, ValueError):
        raise DataError(f"{path}:{line}: bad {col} value {s!r}") from None


# -- curves ----------------------------------------------------------------


def write_curves(path, curves: Sequence[SampledCurve]) -> None:
    """Long format `curve_id, dim, x, value`; missing samples are omitted."""
    rows = []
    for c in curves:
        x = c.grid.points
        for d in range(c.ndim):
            v = c.values[d]
            for j in np.flatnonzero(~np.isnan(v)):
                rows.append((c.id, d, float(x[j]), float(v[j])))
    write_rows(path, ("curve_id", "dim", "x", "value"), rows)


def _grid_from_abscissae(cid: str, xs: np.ndarray) -> tuple[UniformGrid, np.ndarray]:
    if xs.size < 2:
        raise DataError(f"curve {cid!r}: needs at least two abscissae")
    diffs = np.diff(xs)
    step = float(diffs.min())
    if step <= 0:
        raise DataError(f"curve {cid!r}: duplicate abscissae")
    idx = (xs - xs[0]) / step
    ridx = np.rint(idx)
    if np.max(np.abs(idx - ridx)) > _GRID_RTOL * max(1.0, ridx[-1]):
        raise DataError(f"curve {cid!r}: abscissae are not on a uniform grid")
    count = int(ridx[-1]) + 1
    step = (xs[-1] - xs[0]) / (count - 1)
    return UniformGrid(float(xs[0]), float(step), count), ridx.astype(np.intp)


def read_curves(path) -> list[SampledCurve]:
    """Read long-format curves; each curve's abscissae must sit on a uniform grid."""
    rows = _read_dicts(path, ("curve_id", "dim", "x", "value"))
    if not rows:
        raise DataError(f"{path}: no data rows")
    data: dict[str, dict[int, dict[float, float]]] = defaultdict(lambda: defaultdict(dict))
    order: list[str] = []
    for line, r in enumerate(rows, start=2):
        cid = r["curve_id"]
        if not cid:
            raise DataError(f"{path}:{line}: empty curve_id")
        try:
            d = int(r["dim"])
        except (TypeError, ValueError):
            raise DataError(f"{path}:{line}: bad dim {r['dim']!r}") from None
        if d < 0:
            raise DataError(f"{path}:{line}: dim must be 0-based and non-negative")
        if r["value"] in (None, ""):
            raise DataError(f"{path}:{line}: empty value; omit the row instead")
        x = _float(r["x"], path, line, "x")
        v = _float(r["value"], path, line, "value")
        if not (np.isfinite(x) and np.isfinite(v)):
            raise DataError(f"{path}:{line}: non-finite x or value")
        if cid not in data:
            order.append(cid)
        if x in data[cid][d]:
            raise DataError(f"{path}:{line}: duplicate sample for curve {cid!r} dim {d} at x={x}")
        data[cid][d][x] = v
    ndims = {max(dims) + 1 for dims in data.values()}
    if len(ndims) != 1:
        raise DataError(f"{path}: curves have different numbers of dimensions")
    p = ndims.pop()
    curves = []
    for cid in order:
        dims = data[cid]
        xs = np.array(sorted({x for d in dims.values() for x in d}))
        grid, idx = _grid_from_abscissae(cid, xs)
        pos = dict(zip(xs.tolist(), idx.tolist()))
        vals = np.full((p, grid.count), np.nan)
        for d in range(p):
            if d not in dims:
                raise DataError(f"curve {cid!r}: dimension {d} has no samples")
            for x, v in dims[d].items():
                vals[d, pos[x]] = v
        try:
            curves.append(SampledCurve(cid, Interval(grid.start, grid.stop), grid, vals))
        except ValueError as e:
            raise DataError(f"curve {cid!r}: {e}") from e
    return curves


def write_truth(path, ids: Sequence[str], labels, warps: Sequence[AffineWarp]) -> None:
    write_rows(
        path,
        ("curve_id", "true_label", "true_a", "true_b"),
        ((i, int(lab), float(h.a), float(h.b)) for i, lab, h in zip(ids, labels, warps)),
    )


def read_truth(path) -> dict[str, int]:
    rows = _read_dicts(path, ("curve_id", "true_label"))
    out = {}
    for line, r in enumerate(rows, start=2):
        try:
            out[r["curve_id"]] = int(r["true_label"])
        except (TypeError, ValueError):
            raise DataError(f"{path}:{line}: bad true_label {r['true_label']!r}") from None
    return out


def read_labels(path) -> dict[str, int]:
    rows = _read_dicts(path, ("curve_id", "label"))
    return {r["curve_id"]: int(r["label"]) for r in rows}


# -- fit outputs -----------------------------------------------------------


def write_warps(path, ids, warps, labels) -> None:
    write_rows(
        path,
        ("curve_id", "label", "a", "b"),
        ((i, int(lab), float(h.a), float(h.b)) for i, h, lab in zip(ids, warps, labels)),
    )


def write_profile(path, grid: UniformGrid, values, column: str) -> None:
    write_rows(path, ("x", column), zip(grid.points.tolist(), np.asarray(values, dtype=float).tolist()))


def write_templates(path, templates) -> None:
    rows = []
    for t in templates:
        x = t.grid.points
        for d in range(t.values.shape[0]):
            v = t.values[d]
            for j in np.flatnonzero(~np.isnan(v)):
                rows.append((t.index, d, float(x[j]), float(v[j])))
    write_rows(path, ("cluster", "dim", "x", "value"), rows)


def write_aligned(path, ids, grid: UniformGrid, aligned: np.ndarray) -> None:
    rows = []
    x = grid.points
    for cid, vals in zip(ids, aligned):
        for d in range(vals.shape[0]):
            for j in np.flatnonzero(~np.isnan(vals[d])):
                rows.append((cid, d, float(x[j]), float(vals[d, j])))
    write_rows(path, ("curve_id", "dim", "x", "value"), rows)


def write_history(path, history) -> None:
    write_rows(
        path,
        ("iteration", "objective", "mean_distance", "mean_dw", "labels_changed"),
        (
            (it, float(h.objective), float(h.mean_distance), float(h.mean_dw), h.labels_changed)
            for it, h in enumerate(history, start=1)
        ),
    )


def _round(x):
    if isinstance(x, (list, tuple)):
        return [_round(v) for v in x]
    if isinstance(x, dict):
        return {k: _round(v) for k, v in x.items()}
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return None if np.isnan(x) else float(fmt(x))
    if isinstance(x, np.integer):
        return int(x)
    return x


def fit_document(result) -> dict:
    """Plain-data form of a FitResult under the versioned schema."""
    g = result.grid
    return _round(
        {
            "schema": SCHEMA,
            "config": result.config.to_dict(),
            "grid": {"start": g.start, "step": g.step, "count": g.count},
            "iterations": result.iterations,
            "converged": result.converged,
            "curves": [
                {"id": cid, "label": int(lab), "a": h.a, "b": h.b, "score": s}
                for cid, lab, h, s in zip(result.curve_ids, result.labels.labels, result.warps, result.scores)
            ],
            "weight": {"m": result.weight.m_fraction, "values": result.weight.values.tolist()},
            "templates": [
                {"cluster": t.index, "values": [row.tolist() for row in t.values]} for t in result.templates
            ],
            "history": [
                {
                    "objective": h.objective,
                    "mean_distance": h.mean_distance,
                    "mean_dw": h.mean_dw,
                    "labels_changed": h.labels_changed,
                }
                for h in result.history
            ],
        }
    )


def write_json(path, doc) -> None:
    atomic_write_text(path, json.dumps(doc, indent=1, sort_keys=True) + "\n")


def read_fit_document(path) -> dict:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise DataError(f"cannot read fit document {path}: {e}") from e
    if doc.get("schema") != SCHEMA:
        raise DataError(f"{path}: unsupported schema {doc.get('schema')!r}, expected {SCHEMA}")
    return doc
