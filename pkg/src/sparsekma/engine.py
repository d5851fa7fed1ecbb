"""Sparse K-mean alignment: alternate warping, assignment and weight updates.

Each iteration runs
  1. a bounded warp search per curve against its own template (w fixed),
     then per-cluster warp normalisation;
  2. template re-estimation and reassignment under the w-weighted metric;
  3. (sparse mode) the criterion profile for the new partition and the
     optimal weight function for it.
Plain KMA skips step 3 and keeps a uniform weight.
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .align import (
    CurveWarper,
    Template,
    WarpBounds,
    assign_from_losses,
    loss_matrix,
    normalize_warp_params,
    search_warp,
    template_arrays,
)
from .criterion import (
    CriterionProfile,
    SingleClusterError,
    bcss_centroid_arrays,
    bcss_pairwise_arrays,
    normalized_derivatives,
    wcsim_arrays,
)
from .grid import AffineWarp, SampledCurve, UniformGrid, common_grid
from .metrics import MetricKind, observed
from .partition import Partition
from .ranksum import mann_whitney_u
from .weights import DegenerateCriterionError, WeightFunction, solve_weight, verify_weight

log = logging.getLogger(__name__)


class Mode(str, enum.Enum):
    SPARSE_KMA = "sparse"
    KMA = "kma"


class EngineError(RuntimeError):
    pass


@dataclass(frozen=True)
class EngineConfig:
    K: int = 2
    metric: MetricKind = MetricKind.L2_DISTANCE
    m: float = 0.4
    eps_a: float = 0.01
    eps_b: float = 0.01
    tol: float = 1e-3
    max_iter: int = 50
    resolution: int = 200
    seed: int = 0
    mode: Mode = Mode.SPARSE_KMA
    robust_templates: bool = False
    stop_on_weight_change: bool = True
    loess_span: float = 0.3
    search_points: int = 21
    align_all_templates: bool = False

    def __post_init__(self):
        object.__setattr__(self, "metric", MetricKind(self.metric))
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.K < 1:
            raise ValueError(f"K must be positive, got {self.K}")
        if self.mode is Mode.SPARSE_KMA and self.K < 2:
            raise SingleClusterError(
                "sparse mode needs K >= 2: with one group the weight function is not defined; use KMA mode"
            )
        if not 0.0 <= self.m < 1.0:
            raise ValueError(f"m must lie in [0, 1), got {self.m}")
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be positive, got {self.max_iter}")
        if self.resolution < 3:
            raise ValueError(f"resolution must be at least 3, got {self.resolution}")
        if self.search_points < 1 or self.search_points % 2 == 0:
            raise ValueError("search_points must be a positive odd number")
        WarpBounds(self.eps_a, self.eps_b)

    @property
    def bounds(self) -> WarpBounds:
        return WarpBounds(self.eps_a, self.eps_b)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["metric"] = self.metric.value
        d["mode"] = self.mode.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EngineConfig":
        names = set(cls.__dataclass_fields__)
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class IterationRecord:
    objective: float  # rectangle-rule integral of w*g after the weight step
    mean_distance: float  # mean distance (L2) or similarity (H1) to own template
    mean_dw: float  # mean absolute change of w on the grid
    labels_changed: int


@dataclass
class StepChecks:
    """Per-step monotonicity and constraint bookkeeping collected during a fit."""

    warp_violations: int = 0
    assign_violations: int = 0
    weight_violations: int = 0
    weight_constraint_violations: int = 0
    objective_dips: int = 0
    empty_cluster_repairs: int = 0
    max_normalization_residual: float = 0.0
    weight_reports: list = field(default_factory=list)


@dataclass
class FitResult:
    labels: Partition
    warps: list[AffineWarp]
    weight: WeightFunction
    templates: list[Template]
    history: list[IterationRecord]
    iterations: int
    converged: bool
    grid: UniformGrid
    config: EngineConfig
    curve_ids: list[str]
    scores: np.ndarray  # per-curve distance/similarity to own template
    aligned: np.ndarray  # (n, p, G) aligned samples on the common grid
    checks: StepChecks
    profile: CriterionProfile | None = None


def _random_labels(rng: np.random.Generator, n: int, K: int) -> np.ndarray:
    # balanced random split so that no cluster starts empty
    return rng.permutation(np.arange(n) % K)


def _criterion(vals, ders, labels, K, step, metric) -> np.ndarray:
    if metric is MetricKind.H1_SIMILARITY:
        return wcsim_arrays(normalized_derivatives(ders, step), labels, K)
    mask = observed(vals)
    if np.all(mask == mask[0]):
        return bcss_centroid_arrays(vals, labels, K, step)
    g, _ = bcss_pairwise_arrays(vals, labels, K, step)
    return g


def _losses_to_scores(losses: np.ndarray, metric: MetricKind) -> np.ndarray:
    if metric is MetricKind.L2_DISTANCE:
        return np.sqrt(losses)
    return -losses


def _normalization_residual(a, b, labels, K) -> float:
    r = 0.0
    for k in range(K):
        idx = labels == k
        if np.any(idx):
            r = max(r, abs(a[idx].mean() - 1.0), abs(b[idx].mean()))
    return r


class _State:
    """Mutable fit state: source curves, cumulative warps and their samples on the grid."""

    def __init__(self, curves, grid, metric):
        self.grid = grid
        self.metric = metric
        self.warpers = [CurveWarper(c.values, c.grid, grid, metric) for c in curves]
        n = len(curves)
        self.a = np.ones(n)
        self.b = np.zeros(n)

    def aligned(self):
        vals, ders = [], []
        for i, wp in enumerate(self.warpers):
            v, d = wp.sample([self.a[i]], [self.b[i]])
            vals.append(v[0])
            if d is not None:
                ders.append(d[0])
        return np.stack(vals), (np.stack(ders) if ders else None)


def fit(
    curves: Sequence[SampledCurve],
    config: EngineConfig,
    init_labels=None,
) -> FitResult:
    """Jointly cluster, align and (in sparse mode) select the domain.

    Args:
        curves: input curves, each on its own grid.
        config: engine settings.
        init_labels: optional initial 0-based labels; random (seeded) otherwise.
    """
    n = len(curves)
    K = config.K
    if n < K:
        raise ValueError(f"need at least K={K} curves, got {n}")
    if len({c.ndim for c in curves}) != 1:
        raise ValueError("all curves must share the codomain dimension")
    metric = config.metric
    sparse = config.mode is Mode.SPARSE_KMA
    grid = common_grid(curves, config.resolution)
    step = grid.step
    bounds = config.bounds
    rng = np.random.default_rng(config.seed)
    if init_labels is None:
        labels = _random_labels(rng, n, K)
    else:
        labels = np.asarray(init_labels, dtype=np.intp).copy()
        Partition(labels, K).require_nonempty()

    state = _State(curves, grid, metric)
    w = WeightFunction.uniform(grid)
    checks = StepChecks()

    def templates_for(vals, ders, labels):
        return [
            template_arrays(
                vals, ders, np.flatnonzero(labels == k), grid, metric,
                config.robust_templates, config.loess_span, k,
            )
            for k in range(K)
        ]

    vals, ders = state.aligned()
    templates = templates_for(vals, ders, labels)
    losses = loss_matrix(vals, ders, templates, w.values, step, metric)
    prev_mean = float(np.mean(_losses_to_scores(losses[np.arange(n), labels], metric)))
    prev_obj = None
    weight_feasible = False
    history: list[IterationRecord] = []
    converged = False
    g = None

    for it in range(1, config.max_iter + 1):
        # step 1: warps against own templates with w fixed
        for i in range(n):
            cur = AffineWarp(state.a[i], state.b[i])
            t = templates[labels[i]]
            before = float(state.warpers[i].loss([cur.a], [cur.b], t, w.values)[0])
            res = search_warp(state.warpers[i], cur, t, w.values, bounds, config.search_points)
            after = float(state.warpers[i].loss([res.warp.a], [res.warp.b], t, w.values)[0])
            if after > before:
                checks.warp_violations += 1
            state.a[i], state.b[i] = res.warp.a, res.warp.b
        state.a, state.b = normalize_warp_params(state.a, state.b, labels, K)

        # step 2: templates and reassignment with w fixed
        vals, ders = state.aligned()
        templates = templates_for(vals, ders, labels)
        losses = loss_matrix(vals, ders, templates, w.values, step, metric)
        cand = None
        if config.align_all_templates and K > 1:
            cand = np.empty((n, K, 2))
            for i in range(n):
                cur = AffineWarp(state.a[i], state.b[i])
                for k in range(K):
                    cand[i, k] = cur.a, cur.b
                    if k == labels[i]:
                        continue
                    res = search_warp(state.warpers[i], cur, templates[k], w.values, bounds, config.search_points)
                    lk = float(state.warpers[i].loss([res.warp.a], [res.warp.b], templates[k], w.values)[0])
                    if lk < losses[i, k]:
                        losses[i, k] = lk
                        cand[i, k] = res.warp.a, res.warp.b
        new_labels, repairs = assign_from_losses(losses, labels)
        if cand is not None:
            state.a = cand[np.arange(n), new_labels, 0].copy()
            state.b = cand[np.arange(n), new_labels, 1].copy()
        checks.empty_cluster_repairs += repairs
        rows = np.arange(n)
        if repairs == 0:
            before = losses[rows, labels]
            after = losses[rows, new_labels]
            fin = np.isfinite(before)
            if np.any(after[fin] > before[fin]):
                checks.assign_violations += 1
        changed = int(np.count_nonzero(new_labels != labels))
        labels = new_labels
        if changed:
            state.a, state.b = normalize_warp_params(state.a, state.b, labels, K)
            vals, ders = state.aligned()
        templates = templates_for(vals, ders, labels)
        checks.max_normalization_residual = max(
            checks.max_normalization_residual, _normalization_residual(state.a, state.b, labels, K)
        )

        # step 3: weight function for the new partition
        if K >= 2:
            g = _criterion(vals, ders, labels, K, step, metric)
        else:
            g = None
        mean_dw = 0.0
        if sparse:
            old_obj = float(np.sum(w.values * g) * step)
            try:
                w_new = solve_weight(CriterionProfile(grid, g, metric), config.m)
            except DegenerateCriterionError as e:
                raise EngineError(f"iteration {it}: {e}") from e
            new_obj = float(np.sum(w_new.values * g) * step)
            if weight_feasible and new_obj < old_obj - 1e-12 * max(1.0, abs(old_obj)):
                checks.weight_violations += 1
            report = verify_weight(w_new)
            checks.weight_reports.append(report)
            if not report.ok:
                checks.weight_constraint_violations += 1
            mean_dw = float(np.mean(np.abs(w_new.values - w.values)))
            w = w_new
            weight_feasible = True
        obj = float(np.sum(w.values * g) * step) if g is not None else math.nan

        losses = loss_matrix(vals, ders, templates, w.values, step, metric)
        mean_score = float(np.mean(_losses_to_scores(losses[np.arange(n), labels], metric)))
        history.append(IterationRecord(obj, mean_score, mean_dw, changed))
        if prev_obj is not None and np.isfinite(obj) and obj < prev_obj - 1e-6 * abs(prev_obj):
            checks.objective_dips += 1
            log.warning("iteration %d: objective dipped from %.9g to %.9g", it, prev_obj, obj)
        prev_obj = obj

        dist_ok = abs(mean_score - prev_mean) < config.tol
        w_ok = (not sparse) or (not config.stop_on_weight_change) or mean_dw < config.tol
        prev_mean = mean_score
        if dist_ok and w_ok and changed == 0:
            converged = True
            break

    scores = _losses_to_scores(losses[np.arange(n), labels], metric)
    profile = CriterionProfile(grid, g, metric) if g is not None else None
    return FitResult(
        labels=Partition(labels, K),
        warps=[AffineWarp(x, y) for x, y in zip(state.a, state.b)],
        weight=w,
        templates=templates,
        history=history,
        iterations=len(history),
        converged=converged,
        grid=grid,
        config=config,
        curve_ids=[c.id for c in curves],
        scores=scores,
        aligned=vals,
        checks=checks,
        profile=profile,
    )


def fit_kma_baseline(curves: Sequence[SampledCurve], config: EngineConfig, init_labels=None) -> FitResult:
    """Plain K-mean alignment: uniform weight, no weight step."""
    return fit(curves, replace(config, mode=Mode.KMA), init_labels)


def objective(curves: Sequence[SampledCurve], partition: Partition, w, metric=MetricKind.L2_DISTANCE) -> float:
    """Rectangle-rule integral of w*g for aligned curves on a shared grid."""
    grid = curves[0].grid
    vals = np.stack([c.values for c in curves])
    wv = np.asarray(getattr(w, "values", w), dtype=float)
    if not np.any(wv):
        return 0.0
    metric = MetricKind(metric)
    ders = None
    if metric is MetricKind.H1_SIMILARITY:
        from .metrics import derivative_values

        ders = np.stack([derivative_values(v, grid.step) for v in vals])
    partition.require_nonempty()
    g = _criterion(vals, ders, partition.labels, partition.K, grid.step, metric)
    return float(np.sum(wv * g) * grid.step)


@dataclass
class KSummary:
    K: int
    scores: np.ndarray  # per-curve distance (L2) or similarity (H1) to own template
    median: float
    fit: FitResult


@dataclass
class DiagnosticsReport:
    metric: MetricKind
    per_k: list[KSummary]
    # p-value of the two-sided rank-sum test between K and the next K
    p_values: dict[tuple[int, int], float]

    def p_value(self, k1: int, k2: int) -> float:
        return self.p_values[(k1, k2)]


def tune_k(curves: Sequence[SampledCurve], config: EngineConfig, k_range: Sequence[int]) -> DiagnosticsReport:
    """Fit each K and compare within-cluster scores of consecutive K values."""
    ks = list(k_range)
    if not ks:
        raise ValueError("empty K range")
    if ks != sorted(ks) or len(set(ks)) != len(ks):
        raise ValueError(f"K range must be strictly increasing, got {ks}")
    lo = 2 if config.mode is Mode.SPARSE_KMA else 1
    if ks[0] < lo or ks[-1] >= len(curves):
        raise ValueError(f"K range must lie in [{lo}, {len(curves)})")
    per_k = []
    for k in ks:
        res = fit(curves, replace(config, K=k))
        per_k.append(KSummary(k, res.scores, float(np.median(res.scores)), res))
    pvals = {}
    for s1, s2 in zip(per_k, per_k[1:]):
        _, p = mann_whitney_u(s1.scores, s2.scores)
        pvals[(s1.K, s2.K)] = p
    return DiagnosticsReport(config.metric, per_k, pvals)
