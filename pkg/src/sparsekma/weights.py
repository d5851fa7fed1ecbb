"""Optimal weight function for a fixed criterion profile.

Maximises the rectangle-rule integral of w*g subject to ||w||_2 <= 1, w >= 0
and w == 0 on a set of measure at least m * mu(D). The maximiser keeps the
points with the largest positive g, zeroes the rest, and sets w proportional
to g on the kept set.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .criterion import CriterionProfile
from .grid import UniformGrid


class DegenerateCriterionError(ValueError):
    """No grid point separates the clusters, so no weight can be formed."""


@dataclass(frozen=True, eq=False)
class WeightFunction:
    grid: UniformGrid
    values: np.ndarray = field(repr=False)
    m_fraction: float = 0.0

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.grid.count,):
            raise ValueError(f"weight has {vals.shape} values for a grid of {self.grid.count}")
        if not 0.0 <= self.m_fraction < 1.0:
            raise ValueError(f"m_fraction must lie in [0, 1), got {self.m_fraction}")
        object.__setattr__(self, "values", vals)

    @classmethod
    def uniform(cls, grid: UniformGrid) -> "WeightFunction":
        """Constant weight of unit L2 norm over the whole grid."""
        return cls(grid, np.full(grid.count, 1.0 / math.sqrt(grid.count * grid.step)), 0.0)

    @property
    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.values**2) * self.grid.step))


def zero_count(m_fraction: float, count: int) -> int:
    """Number of grid points that must be zero to reach measure m * mu(D)."""
    # round-off guard so that e.g. 0.3 * 10 is not read as 3.0000000000000004
    return int(math.ceil(m_fraction * count - 1e-9))


def solve_weight(g: CriterionProfile, m: float) -> WeightFunction:
    """Hard-threshold the clipped profile and normalise to unit L2 norm.

    Args:
        g: point-wise criterion on the common grid.
        m: sparsity level as a fraction of mu(D).

    Ties at the threshold are zeroed lowest grid index first.
    """
    if not 0.0 <= m < 1.0:
        raise ValueError(f"sparsity fraction must lie in [0, 1), got {m}")
    grid = g.grid
    gp = np.maximum(g.values, 0.0)
    if not np.any(gp > 0):
        raise DegenerateCriterionError("criterion is non-positive everywhere: clusters do not separate")
    k = zero_count(m, grid.count)
    if k >= grid.count:
        raise DegenerateCriterionError(f"sparsity {m} leaves no support on {grid.count} points")
    order = np.argsort(gp, kind="stable")
    w = gp.copy()
    w[order[:k]] = 0.0
    norm = math.sqrt(float(np.sum(w * w)) * grid.step)
    if norm == 0.0:
        raise DegenerateCriterionError(f"sparsity {m} zeroes every point where the criterion is positive")
    return WeightFunction(grid, w / norm, m)


@dataclass(frozen=True)
class ConstraintReport:
    norm: float
    norm_slack: float  # 1 - ||w||, negative when violated
    min_value: float
    zero_measure: float
    required_zero_measure: float
    grid_step: float = 0.0

    @property
    def norm_ok(self) -> bool:
        return self.norm_slack >= -1e-9

    @property
    def nonnegative_ok(self) -> bool:
        return self.min_value >= 0.0

    @property
    def sparsity_ok(self) -> bool:
        # one grid cell of slack for the discretised measure
        return self.zero_measure >= self.required_zero_measure - self.grid_step

    @property
    def ok(self) -> bool:
        return self.norm_ok and self.nonnegative_ok and self.sparsity_ok


def verify_weight(w: WeightFunction) -> ConstraintReport:
    step = w.grid.step
    norm = w.norm
    return ConstraintReport(
        norm=norm,
        norm_slack=1.0 - norm,
        min_value=float(np.min(w.values)),
        zero_measure=float(np.count_nonzero(w.values == 0.0) * step),
        required_zero_measure=w.m_fraction * w.grid.count * step,
        grid_step=step,
    )


def weighted_objective(w: WeightFunction, g: CriterionProfile) -> float:
    return float(np.sum(w.values * g.values) * g.grid.step)
