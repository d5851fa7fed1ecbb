"""Warp search, warp normalisation, cluster assignment and template estimation."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .grid import IDENTITY, AffineWarp, Interval, SampledCurve, UniformGrid, interp_uniform
from .loess import loess
from .metrics import (
    MetricKind,
    derivative_values,
    h1_similarity_arrays,
    observed,
    weighted_sq_distance,
)
from .optimize import golden_section
from .partition import Partition


@dataclass(frozen=True)
class WarpBounds:
    """Per-iteration half-widths: a in [1-eps_a, 1+eps_a], b in [-eps_b, eps_b]."""

    eps_a: float = 0.01
    eps_b: float = 0.01

    def __post_init__(self):
        if self.eps_a < 0 or self.eps_b < 0:
            raise ValueError("warp bounds must be non-negative")
        if not 1 - self.eps_a > 0:
            raise ValueError(f"eps_a must be below 1, got {self.eps_a}")


@dataclass(frozen=True, eq=False)
class Template:
    index: int
    grid: UniformGrid
    values: np.ndarray = field(repr=False)  # (p, G), NaN off support
    unit_derivs: np.ndarray | None = field(default=None, repr=False)  # H1 mode only

    @property
    def support(self) -> np.ndarray:
        return observed(self.values)

    @property
    def curve(self) -> SampledCurve:
        x = self.grid.points[self.support]
        return SampledCurve(f"template{self.index}", Interval(x[0], x[-1]), self.grid, self.values)


@dataclass(frozen=True)
class WarpFit:
    warp: AffineWarp  # cumulative warp after this search
    step: AffineWarp  # increment chosen in this search
    score: float  # distance (L2) or similarity (H1) to the template
    degenerate: bool = False


def min_count(n_members: int) -> int:
    # a lone member must still be able to define its own template
    return min(n_members, max(2, math.ceil(0.05 * n_members)))


def _loss_to_score(loss: float, kind: MetricKind) -> float:
    if not np.isfinite(loss):
        return math.inf if kind is MetricKind.L2_DISTANCE else -math.inf
    return math.sqrt(loss) if kind is MetricKind.L2_DISTANCE else -loss


def template_loss(values, derivs, template: Template, w: np.ndarray, step: float, kind: MetricKind):
    """Loss of warped samples against a template (lower is better).

    values/derivs: (..., p, G). L2: squared weighted distance. H1: negative
    weighted similarity. Undefined comparisons get +inf.
    """
    if kind is MetricKind.L2_DISTANCE:
        loss, count = weighted_sq_distance(values, template.values, w, step)
    else:
        rho, count = h1_similarity_arrays(derivs, template.unit_derivs, w, step)
        loss = -rho
    loss = np.where((count >= 2) & np.isfinite(loss), loss, np.inf)
    return loss


class CurveWarper:
    """Evaluates a fixed source curve under many cumulative warps on a target grid."""

    def __init__(self, values: np.ndarray, grid: UniformGrid, target: UniformGrid, kind: MetricKind, derivs=None):
        self.values = np.atleast_2d(values)
        self.grid = grid
        self.target = target
        self.kind = MetricKind(kind)
        self.derivs = None
        if self.kind is MetricKind.H1_SIMILARITY:
            self.derivs = derivs if derivs is not None else derivative_values(self.values, grid.step)

    def sample(self, a, b):
        """Warped samples for parameter arrays a, b of shape (c,): returns (c, p, G) arrays."""
        a = np.atleast_1d(np.asarray(a, dtype=float))
        b = np.atleast_1d(np.asarray(b, dtype=float))
        pts = a[:, None] * self.target.points[None, :] + b[:, None]
        vals = np.moveaxis(interp_uniform(self.values, self.grid, pts), 0, 1)
        ders = None
        if self.derivs is not None:
            ders = np.moveaxis(interp_uniform(self.derivs, self.grid, pts), 0, 1) * a[:, None, None]
        return vals, ders

    def loss(self, a, b, template: Template, w: np.ndarray) -> np.ndarray:
        vals, ders = self.sample(a, b)
        return template_loss(vals, ders, template, w, self.target.step, self.kind)


def _axis(eps: float, n: int) -> np.ndarray:
    if eps == 0:
        return np.zeros(1)
    ax = eps * np.linspace(-1.0, 1.0, n)
    ax[n // 2] = 0.0
    return ax


def search_warp(
    warper: CurveWarper,
    current: AffineWarp,
    template: Template,
    w: np.ndarray,
    bounds: WarpBounds,
    grid_points: int = 21,
) -> WarpFit:
    """Dense grid over the per-iteration box, then one golden pass per coordinate.

    The identity increment is the incumbent; a candidate replaces it only when
    strictly better, so the returned score never loses to the current warp.
    """
    kind = warper.kind
    da = 1.0 + _axis(bounds.eps_a, grid_points)
    db = _axis(bounds.eps_b, grid_points)
    sa, sb = (m.ravel() for m in np.meshgrid(da, db, indexing="ij"))
    ca, cb = current.a * sa, current.a * sb + current.b
    losses = warper.loss(ca, cb, template, w)

    best_loss = float(warper.loss([current.a], [current.b], template, w)[0])
    best_a, best_b = 1.0, 0.0
    j = int(np.argmin(losses))
    if losses[j] < best_loss:
        best_loss, best_a, best_b = float(losses[j]), float(sa[j]), float(sb[j])

    if not np.isfinite(best_loss):
        return WarpFit(current, IDENTITY, _loss_to_score(best_loss, kind), degenerate=True)

    def one(a_step, b_step):
        return float(warper.loss([current.a * a_step], [current.a * b_step + current.b], template, w)[0])

    if bounds.eps_a > 0:
        h = 2 * bounds.eps_a / (grid_points - 1)
        lo, hi = max(best_a - h, 1 - bounds.eps_a), min(best_a + h, 1 + bounds.eps_a)
        x, fx = golden_section(lambda s: one(s, best_b), lo, hi, tol=h * 1e-3)
        if fx < best_loss:
            best_loss, best_a = fx, x
    if bounds.eps_b > 0:
        h = 2 * bounds.eps_b / (grid_points - 1)
        lo, hi = max(best_b - h, -bounds.eps_b), min(best_b + h, bounds.eps_b)
        x, fx = golden_section(lambda s: one(best_a, s), lo, hi, tol=h * 1e-3)
        if fx < best_loss:
            best_loss, best_b = fx, x

    step = AffineWarp(best_a, best_b)
    cum = AffineWarp(current.a * best_a, current.a * best_b + current.b)
    return WarpFit(cum, step, _loss_to_score(best_loss, kind))


def best_warp(
    f: SampledCurve,
    template: Template,
    w,
    bounds: WarpBounds,
    kind: MetricKind = MetricKind.L2_DISTANCE,
    current: AffineWarp = IDENTITY,
    grid_points: int = 21,
) -> WarpFit:
    """Best warp of the source curve `f` against `template` within `bounds`.

    `current` is the cumulative warp already applied; the search is over one
    more bounded increment composed on the right of it.
    """
    wv = np.ones(template.grid.count) if w is None else np.asarray(getattr(w, "values", w), dtype=float)
    warper = CurveWarper(f.values, f.grid, template.grid, kind)
    return search_warp(warper, current, template, wv, bounds, grid_points)


def normalize_warps(warps: Sequence[AffineWarp], partition: Partition) -> list[AffineWarp]:
    """Compose each warp with the inverse of its cluster's mean warp."""
    a = np.array([h.a for h in warps], dtype=float)
    b = np.array([h.b for h in warps], dtype=float)
    na, nb = normalize_warp_params(a, b, partition.labels, partition.K)
    return [AffineWarp(x, y) for x, y in zip(na, nb)]


def normalize_warp_params(a: np.ndarray, b: np.ndarray, labels: np.ndarray, K: int):
    a = np.asarray(a, dtype=float).copy()
    b = np.asarray(b, dtype=float).copy()
    for k in range(K):
        idx = labels == k
        if not np.any(idx):
            continue
        ma, mb = a[idx].mean(), b[idx].mean()
        # h o hbar^{-1}: x -> a*(x - mb)/ma + b
        b[idx] = b[idx] - a[idx] * mb / ma
        a[idx] = a[idx] / ma
    return a, b


def template_arrays(
    values: np.ndarray,
    derivs: np.ndarray | None,
    members: np.ndarray,
    grid: UniformGrid,
    kind: MetricKind,
    robust: bool = False,
    span: float = 0.3,
    index: int = 0,
) -> Template:
    """Template from member rows of aligned (n, p, G) samples.

    Non-robust: point-wise mean where at least min_count members are observed.
    Robust: local linear fit of the pooled member samples over the union of
    member domains.
    """
    members = np.asarray(members)
    if members.size == 0:
        raise ValueError(f"cluster {index} has no members")
    kind = MetricKind(kind)
    vals = values[members]
    mask = observed(vals)
    unit = None
    if kind is MetricKind.H1_SIMILARITY:
        d = derivs[members]
        norms = np.sqrt(np.nansum(d * d, axis=-1) * grid.step)
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = d / norms[..., None]
        unit = np.where(mask[:, None, :], unit, np.nan)

    if robust:
        support = mask.any(axis=0)
        x = np.broadcast_to(grid.points, mask.shape)[mask]
        tv = np.full(vals.shape[1:], np.nan)
        tu = None if unit is None else np.full(vals.shape[1:], np.nan)
        for dim in range(vals.shape[1]):
            tv[dim, support] = loess(x, vals[:, dim, :][mask], grid.points[support], span)
            if unit is not None:
                tu[dim, support] = loess(x, unit[:, dim, :][mask], grid.points[support], span)
    else:
        count = mask.sum(axis=0)
        support = count >= min_count(members.size)
        with np.errstate(invalid="ignore"), warnings.catch_warnings():
            # columns outside the support are all-NaN and discarded anyway
            warnings.simplefilter("ignore", RuntimeWarning)
            tv = np.where(support, np.nanmean(np.where(mask[:, None, :], vals, np.nan), axis=0), np.nan)
            tu = None
            if unit is not None:
                tu = np.where(support, np.nanmean(unit, axis=0), np.nan)
    if np.count_nonzero(support) == 0:
        raise ValueError(f"cluster {index}: no grid point is observed by enough members")
    return Template(index, grid, tv, tu)


def estimate_template(
    curves: Sequence[SampledCurve],
    members,
    kind: MetricKind = MetricKind.L2_DISTANCE,
    robust: bool = False,
    span: float = 0.3,
    index: int = 0,
) -> Template:
    grid = curves[0].grid
    values = np.stack([c.values for c in curves])
    derivs = None
    if MetricKind(kind) is MetricKind.H1_SIMILARITY:
        derivs = np.stack([derivative_values(v, grid.step) for v in values])
    return template_arrays(values, derivs, np.asarray(members, dtype=np.intp), grid, kind, robust, span, index)


def loss_matrix(values, derivs, templates: Sequence[Template], w: np.ndarray, step: float, kind: MetricKind):
    """(n, K) losses of each aligned curve against each template."""
    cols = [template_loss(values, derivs, t, w, step, kind) for t in templates]
    return np.stack(cols, axis=1)


def assign_from_losses(losses: np.ndarray, current: np.ndarray | None = None) -> tuple[np.ndarray, int]:
    """Arg-min assignment with deterministic ties and empty-cluster repair.

    Ties keep the current label when it is among the best, else take the
    lowest index. An empty cluster receives the worst-fitting curve of the
    currently largest cluster. Returns (labels, number of repairs).
    """
    n, K = losses.shape
    labels = np.argmin(losses, axis=1)
    if current is not None:
        cur_loss = losses[np.arange(n), current]
        keep = cur_loss <= losses[np.arange(n), labels]
        labels = np.where(keep, current, labels)
    repairs = 0
    for k in range(K):
        sizes = np.bincount(labels, minlength=K)
        if sizes[k] > 0:
            continue
        donor = int(np.argmax(sizes))
        if sizes[donor] < 2:
            break
        idx = np.flatnonzero(labels == donor)
        own = losses[idx, donor]
        worst = idx[int(np.argmax(np.where(np.isfinite(own), own, np.inf)))]
        labels[worst] = k
        repairs += 1
    return labels, repairs


def assign_clusters(
    curves: Sequence[SampledCurve],
    templates: Sequence[Template],
    w=None,
    kind: MetricKind = MetricKind.L2_DISTANCE,
    current: Partition | None = None,
) -> Partition:
    """Assign aligned curves to their closest template under the weighted metric."""
    grid = curves[0].grid
    kind = MetricKind(kind)
    values = np.stack([c.values for c in curves])
    derivs = None
    if kind is MetricKind.H1_SIMILARITY:
        derivs = np.stack([derivative_values(v, grid.step) for v in values])
    wv = np.ones(grid.count) if w is None else np.asarray(getattr(w, "values", w), dtype=float)
    losses = loss_matrix(values, derivs, templates, wv, grid.step, kind)
    labels, _ = assign_from_losses(losses, None if current is None else current.labels)
    return Partition(labels, len(templates))
