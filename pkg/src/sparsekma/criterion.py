"""Point-wise clustering criterion g(x).

L2 mode uses the between-cluster sum of squares built from the pairwise terms
G_ij(x) = (f_i(x) - f_j(x))^2 * 1{overlap_ij}(x) / sqrt(mu(overlap_ij)),
summed over ordered pairs. H1 mode uses the within-cluster similarity of
normalised derivatives. Both are maximised by the weight function.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .grid import SampledCurve, UniformGrid
from .metrics import MetricKind, derivative_values, observed
from .partition import Partition


class SingleClusterError(ValueError):
    """Sparse mode needs at least two clusters; the weight is undefined for one group."""


class DifferentDomainsError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class CriterionProfile:
    grid: UniformGrid
    values: np.ndarray = field(repr=False)
    kind: MetricKind = MetricKind.L2_DISTANCE
    # ordered pairs (i != j) whose domains do not intersect
    empty_pairs: int = 0

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.grid.count,):
            raise ValueError(f"profile has {vals.shape} values for a grid of {self.grid.count}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("criterion profile must be finite")
        object.__setattr__(self, "values", vals)


def _check_partition(partition: Partition, n: int) -> None:
    if len(partition) != n:
        raise ValueError(f"partition has {len(partition)} labels for {n} curves")
    if partition.K < 2:
        raise SingleClusterError(
            "sparse clustering needs K >= 2: with a single group the weight function is not defined"
        )
    partition.require_nonempty()


def _stack(curves: Sequence[SampledCurve]) -> tuple[np.ndarray, UniformGrid]:
    if len(curves) == 0:
        raise ValueError("no curves given")
    grid = curves[0].grid
    if any(c.grid != grid for c in curves):
        raise ValueError("all curves must share one grid")
    if len({c.ndim for c in curves}) != 1:
        raise ValueError("all curves must share the codomain dimension")
    return np.stack([c.values for c in curves]), grid


def bcss_pairwise_arrays(values: np.ndarray, labels: np.ndarray, K: int, step: float):
    """Exact ordered-pair between-cluster sum of squares.

    values: (n, p, G) with NaN for missing. Returns (g, empty_pairs).
    """
    n = values.shape[0]
    mask = observed(values)
    filled = np.where(mask[:, None, :], values, 0.0)
    mf = mask.astype(float)
    counts = mf @ mf.T
    with np.errstate(divide="ignore"):
        coef = np.where(counts > 0, 1.0 / np.sqrt(counts * step), 0.0)
    empty_pairs = int(np.count_nonzero(counts == 0))
    sizes = np.bincount(labels, minlength=K)
    total = np.zeros(values.shape[-1])
    within = np.zeros(values.shape[-1])
    for i in range(n):
        ov = mask[i] & mask
        diff = filled[i] - filled
        sq = np.where(ov, np.sum(diff * diff, axis=1), 0.0)
        term = coef[i][:, None] * sq
        total += term.sum(axis=0)
        same = labels == labels[i]
        within += term[same].sum(axis=0) / sizes[labels[i]]
    return total / n - within, empty_pairs


def bcss_centroid_arrays(values: np.ndarray, labels: np.ndarray, K: int, step: float) -> np.ndarray:
    """K-means decomposition of the same criterion; needs identical domains."""
    mask = observed(values)
    if not np.all(mask == mask[0]):
        raise DifferentDomainsError("curve domains differ; use the pairwise criterion")
    count = np.count_nonzero(mask[0])
    if count == 0:
        return np.zeros(values.shape[-1])
    filled = np.where(mask[:, None, :], values, 0.0)
    c = 2.0 / np.sqrt(count * step)
    total = np.sum((filled - filled.mean(axis=0)) ** 2, axis=(0, 1))
    within = np.zeros(values.shape[-1])
    for k in range(K):
        grp = filled[labels == k]
        within += np.sum((grp - grp.mean(axis=0)) ** 2, axis=(0, 1))
    return np.where(mask[0], c * (total - within), 0.0)


def bcss_pairwise(curves: Sequence[SampledCurve], partition: Partition) -> CriterionProfile:
    values, grid = _stack(curves)
    _check_partition(partition, len(curves))
    g, empty = bcss_pairwise_arrays(values, partition.labels, partition.K, grid.step)
    return CriterionProfile(grid, g, MetricKind.L2_DISTANCE, empty)


def bcss_centroid_fast(curves: Sequence[SampledCurve], partition: Partition) -> CriterionProfile:
    values, grid = _stack(curves)
    _check_partition(partition, len(curves))
    g = bcss_centroid_arrays(values, partition.labels, partition.K, grid.step)
    return CriterionProfile(grid, g, MetricKind.L2_DISTANCE)


def normalized_derivatives(derivs: np.ndarray, step: float, ids=None) -> np.ndarray:
    """Divide each curve's derivative by its per-dimension H1 semi-norm.

    derivs: (n, p, G). Raises naming the first curve with a zero semi-norm.
    """
    norms = np.sqrt(np.nansum(derivs * derivs, axis=-1) * step)
    bad = np.flatnonzero((norms <= 0).any(axis=-1))
    if bad.size:
        who = ids[bad[0]] if ids is not None else int(bad[0])
        raise ValueError(f"curve {who} has zero H1 semi-norm")
    return derivs / norms[..., None]


def wcsim_arrays(unit_derivs: np.ndarray, labels: np.ndarray, K: int) -> np.ndarray:
    """Within-cluster similarity criterion from normalised derivatives (n, p, G).

    Because the overlap indicator factorises into per-curve masks, the double
    sum over a cluster equals the square of the masked sum.
    """
    mask = observed(unit_derivs)
    filled = np.where(mask[:, None, :], unit_derivs, 0.0)
    sizes = np.bincount(labels, minlength=K)
    g = np.zeros(unit_derivs.shape[1:])
    for k in range(K):
        if sizes[k] == 0:
            continue
        s = filled[labels == k].sum(axis=0)
        g += s * s / sizes[k]
    return g.mean(axis=0)


def wcsim_pointwise(curves: Sequence[SampledCurve], partition: Partition, derivatives=None) -> CriterionProfile:
    """Within-cluster H1 similarity criterion.

    `derivatives` may supply precomputed (n, p, G) derivative samples; by
    default they are estimated by finite differences.
    """
    values, grid = _stack(curves)
    _check_partition(partition, len(curves))
    if derivatives is None:
        derivatives = np.stack([derivative_values(v, grid.step) for v in values])
    unit = normalized_derivatives(np.asarray(derivatives, dtype=float), grid.step, [c.id for c in curves])
    g = wcsim_arrays(unit, partition.labels, partition.K)
    return CriterionProfile(grid, g, MetricKind.H1_SIMILARITY)


def criterion_profile(curves: Sequence[SampledCurve], partition: Partition, kind: MetricKind) -> CriterionProfile:
    """Dispatch on metric kind, taking the centroid fast path when domains coincide."""
    if MetricKind(kind) is MetricKind.H1_SIMILARITY:
        return wcsim_pointwise(curves, partition)
    values, _ = _stack(curves)
    mask = observed(values)
    if np.all(mask == mask[0]):
        return bcss_centroid_fast(curves, partition)
    return bcss_pairwise(curves, partition)
