"""Normalised L2 distances, the H1 semi-norm similarity and derivative estimates.

Curve-level functions take SampledCurve objects on one shared grid. The
underscore-free array kernels below them work on (p, G) arrays with NaN for
missing samples and are what the engine calls in its inner loops.
"""
from __future__ import annotations

import enum

import numpy as np

from .grid import SampledCurve, UniformGrid


class MetricKind(str, enum.Enum):
    L2_DISTANCE = "l2"
    H1_SIMILARITY = "h1"


class UndefinedDistanceError(ValueError):
    """Two curves overlap on fewer than two grid points."""


class DegenerateSimilarityError(ValueError):
    """A curve has zero H1 semi-norm on the region of interest."""


def _weight_values(w, count: int) -> np.ndarray:
    if w is None:
        return np.ones(count)
    vals = np.asarray(getattr(w, "values", w), dtype=float)
    if vals.shape != (count,):
        raise ValueError(f"weight has shape {vals.shape}, expected ({count},)")
    return vals


def _check_pair(f1: SampledCurve, f2: SampledCurve) -> None:
    if f1.grid != f2.grid:
        raise ValueError(f"curves {f1.id} and {f2.id} are not on the same grid")
    if f1.ndim != f2.ndim:
        raise ValueError(f"curves {f1.id} and {f2.id} differ in codomain dimension")


def observed(values: np.ndarray) -> np.ndarray:
    """Mask of grid points where all dimensions are present; works on (..., p, G)."""
    return ~np.isnan(values).any(axis=-2)


def weighted_sq_distance(v1, v2, w, step: float):
    """Squared weighted normalised distance between (..., p, G) arrays.

    Returns (d2, count) where count is the number of overlap points. Entries
    with count == 0 come back as NaN.
    """
    ov = observed(v1) & observed(v2)
    diff = np.where(ov[..., None, :], v1 - v2, 0.0)
    sq = np.sum(diff * diff, axis=-2)
    num = np.sum(w * sq, axis=-1) * step
    count = np.count_nonzero(ov, axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        d2 = num / (count * step)
    return np.where(count > 0, d2, np.nan), count


def dist_l2_weighted(f1: SampledCurve, f2: SampledCurve, w=None) -> float:
    """Weighted normalised L2 distance; the normalising measure is unweighted."""
    _check_pair(f1, f2)
    wv = _weight_values(w, f1.grid.count)
    d2, count = weighted_sq_distance(f1.values, f2.values, wv, f1.grid.step)
    if count < 2:
        raise UndefinedDistanceError(f"curves {f1.id} and {f2.id} overlap on {count} grid points")
    return float(np.sqrt(d2))


def dist_l2(f1: SampledCurve, f2: SampledCurve) -> float:
    return dist_l2_weighted(f1, f2, None)


def derivative_values(values: np.ndarray, step: float) -> np.ndarray:
    """Finite-difference derivative of (p, G) samples along the last axis.

    Central differences inside each observed run, one-sided at its ends.
    Runs shorter than two points yield NaN.
    """
    values = np.atleast_2d(values)
    out = np.full(values.shape, np.nan)
    for d in range(values.shape[0]):
        ok = ~np.isnan(values[d])
        idx = np.flatnonzero(ok)
        if idx.size == 0:
            continue
        breaks = np.flatnonzero(np.diff(idx) > 1) + 1
        for run in np.split(idx, breaks):
            if run.size >= 2:
                out[d, run] = np.gradient(values[d, run], step, edge_order=1)
    return out


def estimate_derivative(f: SampledCurve) -> SampledCurve:
    if np.any(np.count_nonzero(~np.isnan(f.values), axis=1) < 3):
        raise ValueError(f"curve {f.id}: derivative needs at least 3 samples per dimension")
    return SampledCurve(f.id, f.domain, f.grid, derivative_values(f.values, f.grid.step))


def h1_similarity_arrays(d1, d2, w, step: float):
    """Weighted H1 similarity between derivative arrays of shape (..., p, G).

    The weight enters only the cross term; the semi-norms are taken over the
    unweighted overlap. Returns (similarity averaged over dimensions, count).
    Entries with a zero semi-norm or empty overlap are NaN.
    """
    ov = observed(d1) & observed(d2)
    a = np.where(ov[..., None, :], d1, 0.0)
    b = np.where(ov[..., None, :], d2, 0.0)
    cross = np.sum(w * a * b, axis=-1) * step
    n1 = np.sqrt(np.sum(a * a, axis=-1) * step)
    n2 = np.sqrt(np.sum(b * b, axis=-1) * step)
    with np.errstate(invalid="ignore", divide="ignore"):
        rho = cross / (n1 * n2)
    rho = np.where((n1 > 0) & (n2 > 0), rho, np.nan)
    return np.mean(rho, axis=-1), np.count_nonzero(ov, axis=-1)


def similarity_h1_weighted(f1: SampledCurve, f2: SampledCurve, w=None) -> float:
    _check_pair(f1, f2)
    wv = _weight_values(w, f1.grid.count)
    step = f1.grid.step
    rho, count = h1_similarity_arrays(
        derivative_values(f1.values, step), derivative_values(f2.values, step), wv, step
    )
    if count < 2:
        raise UndefinedDistanceError(f"curves {f1.id} and {f2.id} overlap on {count} grid points")
    if np.isnan(rho):
        raise DegenerateSimilarityError(f"curves {f1.id}/{f2.id}: zero H1 semi-norm on the overlap")
    return float(rho)


def similarity_h1(f1: SampledCurve, f2: SampledCurve) -> float:
    """Normalised semi-inner product of derivatives over the common domain.

    For p > 1 this is the mean of the per-dimension indices.
    """
    return similarity_h1_weighted(f1, f2, None)


def h1_seminorm(f: SampledCurve) -> np.ndarray:
    """Per-dimension H1 semi-norm over the curve's observed points."""
    d = derivative_values(f.values, f.grid.step)
    return np.sqrt(np.nansum(d * d, axis=1) * f.grid.step)


def grid_measure(grid: UniformGrid) -> float:
    return grid.count * grid.step
