"""Curves sampled on uniform grids, affine warps, interpolation and quadrature.

Missing samples are stored as NaN. Every engine computation happens on one
shared uniform grid, so intersections of curve domains reduce to masks and
measures reduce to point counts times the grid step.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

# index-space slack when deciding whether a point falls inside a sampled span
_EDGE_EPS = 1e-9


class DegenerateWarpError(ValueError):
    """A warped curve keeps fewer than two valid grid points."""


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)):
            raise ValueError(f"interval endpoints must be finite, got [{self.lo}, {self.hi}]")
        if not self.lo < self.hi:
            raise ValueError(f"interval needs lo < hi, got [{self.lo}, {self.hi}]")

    @property
    def length(self) -> float:
        return self.hi - self.lo


@dataclass(frozen=True)
class UniformGrid:
    start: float
    step: float
    count: int

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError(f"grid step must be positive, got {self.step}")
        if self.count < 2:
            raise ValueError(f"grid needs at least 2 points, got {self.count}")

    @classmethod
    def spanning(cls, lo: float, hi: float, count: int) -> "UniformGrid":
        """Grid with `count` points from `lo` to `hi` inclusive."""
        if count < 2:
            raise ValueError(f"grid needs at least 2 points, got {count}")
        return cls(float(lo), (float(hi) - float(lo)) / (count - 1), int(count))

    @property
    def stop(self) -> float:
        return self.start + (self.count - 1) * self.step

    @property
    def points(self) -> np.ndarray:
        return self.start + self.step * np.arange(self.count)

    @property
    def interval(self) -> Interval:
        return Interval(self.start, self.stop)


@dataclass(frozen=True)
class AffineWarp:
    """The abscissa map x -> a*x + b with a > 0."""

    a: float = 1.0
    b: float = 0.0

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError(f"warp dilation must be positive, got {self.a}")

    def __call__(self, x):
        return warp_apply(self, x)


IDENTITY = AffineWarp(1.0, 0.0)


def warp_apply(h: AffineWarp, x):
    return h.a * x + h.b


def warp_compose(h1: AffineWarp, h2: AffineWarp) -> AffineWarp:
    """Return h1 o h2, i.e. x -> h1(h2(x))."""
    return AffineWarp(h1.a * h2.a, h1.a * h2.b + h1.b)


def warp_invert(h: AffineWarp) -> AffineWarp:
    return AffineWarp(1.0 / h.a, -h.b / h.a)


@dataclass(frozen=True, eq=False)
class SampledCurve:
    """One functional datum.

    Args:
        id: curve identifier.
        domain: the curve's own compact domain.
        grid: the abscissa grid the samples live on.
        values: array of shape (p, grid.count); NaN marks a missing sample.
    """

    id: str
    domain: Interval
    grid: UniformGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[None, :]
        if vals.ndim != 2 or vals.shape[1] != self.grid.count:
            raise ValueError(
                f"curve {self.id}: values shape {vals.shape} does not match grid of {self.grid.count} points"
            )
        x = self.grid.points
        ok = ~np.isnan(vals)
        tol = _EDGE_EPS * self.grid.step
        outside = (x < self.domain.lo - tol) | (x > self.domain.hi + tol)
        if np.any(ok & outside[None, :]):
            raise ValueError(f"curve {self.id}: samples present outside its domain")
        if np.any(ok.sum(axis=1) < 2):
            raise ValueError(f"curve {self.id}: every dimension needs at least 2 samples")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def ndim(self) -> int:
        return self.values.shape[0]

    @property
    def mask(self) -> np.ndarray:
        """Grid points where every dimension is observed."""
        return ~np.isnan(self.values).any(axis=0)

    @classmethod
    def from_function(cls, id, func, domain: Interval, grid: UniformGrid) -> "SampledCurve":
        """Sample a vectorised callable on `grid`, missing outside `domain`."""
        x = grid.points
        tol = _EDGE_EPS * grid.step
        inside = (x >= domain.lo - tol) & (x <= domain.hi + tol)
        vals = np.full(grid.count, np.nan)
        vals[inside] = func(x[inside])
        return cls(str(id), domain, grid, vals)


def interp_uniform(values: np.ndarray, grid: UniformGrid, x: np.ndarray) -> np.ndarray:
    """Linear interpolation of samples on a uniform grid, NaN off the sampled span.

    `values` has shape (..., grid.count); the result has shape values.shape[:-1] + x.shape.
    Never extrapolates; a NaN neighbour makes the interpolated value NaN.
    """
    x = np.asarray(x, dtype=float)
    u = (x - grid.start) / grid.step
    inside = (u >= -_EDGE_EPS) & (u <= grid.count - 1 + _EDGE_EPS)
    u = np.clip(u, 0.0, grid.count - 1)
    i = np.minimum(np.floor(u).astype(np.intp), grid.count - 2)
    t = u - i
    v0 = values[..., i]
    v1 = values[..., i + 1]
    out = v0 + t * (v1 - v0)
    # exact hits must not pick up a missing neighbour
    out = np.where(t == 0.0, v0, out)
    out = np.where(t == 1.0, v1, out)
    return np.where(inside, out, np.nan)


def curve_warp(f: SampledCurve, h: AffineWarp, target: UniformGrid) -> SampledCurve:
    """Sample x -> f(h(x)) on `target` by linear interpolation of f."""
    x = target.points
    vals = interp_uniform(f.values, f.grid, warp_apply(h, x))
    hinv = warp_invert(h)
    lo = max(warp_apply(hinv, f.domain.lo), target.start)
    hi = min(warp_apply(hinv, f.domain.hi), target.stop)
    ok = ~np.isnan(vals)
    if lo >= hi or np.any(ok.sum(axis=1) < 2):
        raise DegenerateWarpError(f"curve {f.id}: warp ({h.a}, {h.b}) leaves fewer than 2 grid points")
    return SampledCurve(f.id, Interval(lo, hi), target, vals)


def common_grid(curves: Sequence[SampledCurve], resolution: int) -> UniformGrid:
    """Uniform grid of `resolution` points spanning the union of the curve domains."""
    if len(curves) == 0:
        raise ValueError("common_grid needs at least one curve")
    lo = min(c.domain.lo for c in curves)
    hi = max(c.domain.hi for c in curves)
    return UniformGrid.spanning(lo, hi, resolution)


def integrate(values, grid: UniformGrid) -> float:
    """Rectangle rule: sum of non-missing samples times the grid step."""
    v = np.asarray(values, dtype=float)
    return float(np.nansum(v) * grid.step)


def measure(mask: np.ndarray, grid: UniformGrid) -> float:
    return float(np.count_nonzero(mask) * grid.step)
