"""Synthetic two-class benchmarks with affine misalignment, and the run harness.

Random streams: curve i of a dataset with seed s draws three uniforms from
numpy's PCG64 seeded with SeedSequence([s, i]) in the order (q, a, b); q is
obtained from its uniform by the inverse normal CDF.
"""
from __future__ import annotations

import enum
import hashlib
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from statistics import NormalDist
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .engine import EngineConfig, FitResult, Mode, fit
from .grid import AffineWarp, Interval, SampledCurve, UniformGrid

_STD_NORMAL = NormalDist()


class Scenario(str, enum.Enum):
    SIM1 = "sim1"
    SIM2 = "sim2"


@dataclass(frozen=True)
class SimSpec:
    scenario: Scenario = Scenario.SIM1
    n_per_class: int = 100
    q_mean: float = 1.0
    q_sd: float = 0.15
    a_range: tuple[float, float] = (0.9, 1.1)
    b_range: tuple[float, float] = (-0.1, 0.1)
    # added to the b draw of class-1 curves (second class); sim2 phase clustering
    phase_cluster_shift: float = 0.0
    resolution: int = 200
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "scenario", Scenario(self.scenario))
        object.__setattr__(self, "a_range", tuple(float(v) for v in self.a_range))
        object.__setattr__(self, "b_range", tuple(float(v) for v in self.b_range))
        if self.n_per_class < 1:
            raise ValueError("n_per_class must be at least 1")
        lo, hi = self.a_range
        if not (0 < lo <= hi):
            raise ValueError(f"a_range must be a positive interval, got {self.a_range}")
        if self.b_range[0] > self.b_range[1]:
            raise ValueError(f"b_range is reversed: {self.b_range}")
        if self.q_sd < 0:
            raise ValueError("q_sd must be non-negative")
        if self.resolution < 3:
            raise ValueError("resolution must be at least 3")

    @classmethod
    def sim1(cls, **kw) -> "SimSpec":
        return cls(scenario=Scenario.SIM1, **kw)

    @classmethod
    def sim2(cls, **kw) -> "SimSpec":
        # warp ranges twice those of sim1, plus a class-dependent shift
        kw.setdefault("a_range", (0.8, 1.2))
        kw.setdefault("b_range", (-0.2, 0.2))
        kw.setdefault("phase_cluster_shift", 0.15)
        return cls(scenario=Scenario.SIM2, **kw)

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario.value,
            "n_per_class": self.n_per_class,
            "q_mean": self.q_mean,
            "q_sd": self.q_sd,
            "a_range": list(self.a_range),
            "b_range": list(self.b_range),
            "phase_cluster_shift": self.phase_cluster_shift,
            "resolution": self.resolution,
            "seed": self.seed,
        }


@dataclass
class LabeledDataset:
    curves: list[SampledCurve]
    true_labels: np.ndarray
    true_warps: list[AffineWarp]
    q: np.ndarray = field(default_factory=lambda: np.empty(0))


def sim1_mean(label: int, x, q=1.0):
    """Class means: q*x^9 on [-1, 1]; the second class switches to q*x^2 on [0, 1]."""
    x = np.asarray(x, dtype=float)
    inside = (x >= -1) & (x <= 1)
    if label == 0:
        y = q * x**9
    else:
        y = np.where(x < 0, q * x**9, q * x**2)
    return np.where(inside, y, 0.0)


def sim2_mean(label: int, x, q=1.0):
    """Class means: q*sin on [0, 2pi]; the second class reflects the arc on [pi/3, 2pi/3]."""
    x = np.asarray(x, dtype=float)
    inside = (x >= 0) & (x <= 2 * np.pi)
    s = np.sin(x)
    if label == 0:
        y = q * s
    else:
        bump = (x >= np.pi / 3) & (x <= 2 * np.pi / 3)
        y = np.where(bump, q * (np.sqrt(3.0) - s), q * s)
    return np.where(inside, y, 0.0)


_SCENARIOS = {
    Scenario.SIM1: (sim1_mean, Interval(-1.0, 1.0)),
    Scenario.SIM2: (sim2_mean, Interval(0.0, 2 * np.pi)),
}


def _curve_draws(seed: int, index: int) -> np.ndarray:
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, index])))
    return rng.random(3)


def _inv_normal(u: float) -> float:
    return _STD_NORMAL.inv_cdf(min(max(u, 1e-16), 1 - 1e-16))


def generate(spec: SimSpec) -> LabeledDataset:
    """Draw amplitudes and warps per curve and sample y(h(x)) on h^{-1}(D)."""
    mean, base = _SCENARIOS[spec.scenario]
    n = 2 * spec.n_per_class
    curves, labels, warps, qs = [], [], [], []
    for i in range(n):
        label = 0 if i < spec.n_per_class else 1
        u_q, u_a, u_b = _curve_draws(spec.seed, i)
        q = spec.q_mean + spec.q_sd * _inv_normal(u_q)
        a = spec.a_range[0] + (spec.a_range[1] - spec.a_range[0]) * u_a
        b = spec.b_range[0] + (spec.b_range[1] - spec.b_range[0]) * u_b
        if label == 1:
            b += spec.phase_cluster_shift
        h = AffineWarp(a, b)
        lo, hi = (base.lo - b) / a, (base.hi - b) / a
        grid = UniformGrid.spanning(lo, hi, spec.resolution)
        # clip so round-off never steps outside the base domain
        arg = np.clip(a * grid.points + b, base.lo, base.hi)
        vals = mean(label, arg, q)
        curves.append(SampledCurve(f"c{i:03d}", Interval(lo, hi), grid, vals))
        labels.append(label)
        warps.append(h)
        qs.append(q)
    return LabeledDataset(curves, np.array(labels), warps, np.array(qs))


def gen_sim1(spec: SimSpec | None = None) -> LabeledDataset:
    spec = spec or SimSpec.sim1()
    if spec.scenario is not Scenario.SIM1:
        raise ValueError("gen_sim1 needs a sim1 spec")
    return generate(spec)


def gen_sim2(spec: SimSpec | None = None) -> LabeledDataset:
    spec = spec or SimSpec.sim2()
    if spec.scenario is not Scenario.SIM2:
        raise ValueError("gen_sim2 needs a sim2 spec")
    return generate(spec)


def dataset_digest(ds: LabeledDataset) -> str:
    h = hashlib.sha256()
    for c, lab in zip(ds.curves, ds.true_labels):
        h.update(c.id.encode())
        h.update(np.int64(lab).tobytes())
        h.update(np.array([c.grid.start, c.grid.step, c.grid.count], dtype=float).tobytes())
        h.update(np.ascontiguousarray(c.values).tobytes())
    return h.hexdigest()


def misclassification(estimated, truth) -> float:
    """Smallest mismatch fraction over relabelings of the estimated clusters."""
    est = np.asarray(getattr(estimated, "labels", estimated), dtype=np.intp).ravel()
    tru = np.asarray(truth, dtype=np.intp).ravel()
    if est.shape != tru.shape:
        raise ValueError(f"label vectors differ in length: {est.size} vs {tru.size}")
    if est.size == 0:
        return 0.0
    _, ei = np.unique(est, return_inverse=True)
    _, ti = np.unique(tru, return_inverse=True)
    size = max(ei.max(), ti.max()) + 1
    conf = np.zeros((size, size), dtype=np.int64)
    np.add.at(conf, (ei, ti), 1)
    r, c = linear_sum_assignment(conf, maximize=True)
    return 1.0 - conf[r, c].sum() / est.size


@dataclass
class RunRecord:
    run: int
    mode: Mode
    data_seed: int
    fit_seed: int
    digest: str
    misclassification: float
    iterations: int
    converged: bool
    seconds: float
    result: FitResult | None = None


@dataclass
class ModeSummary:
    mode: Mode
    runs: int
    mean_misclassification: float
    sd_misclassification: float | None
    mean_iterations: float
    mean_seconds: float


def derived_seed(base: int, run: int) -> int:
    return int(np.random.SeedSequence([base, run]).generate_state(1)[0])


def _run_one(spec: SimSpec, config: EngineConfig, r: int, modes, keep_results: bool) -> list[RunRecord]:
    data_seed = derived_seed(spec.seed, r)
    fit_seed = derived_seed(config.seed, r)
    ds = generate(replace(spec, seed=data_seed))
    digest = dataset_digest(ds)
    out = []
    for mode in modes:
        cfg = replace(config, mode=mode, seed=fit_seed)
        t0 = time.perf_counter()
        res = fit(ds.curves, cfg)
        dt = time.perf_counter() - t0
        out.append(
            RunRecord(
                r, mode, data_seed, fit_seed, digest,
                misclassification(res.labels, ds.true_labels),
                res.iterations, res.converged, dt,
                res if keep_results else None,
            )
        )
    return out


def run_benchmark(
    spec: SimSpec,
    config: EngineConfig,
    runs: int,
    modes: Sequence[Mode] | None = None,
    keep_results: bool = False,
    jobs: int = 1,
) -> tuple[list[ModeSummary], list[RunRecord]]:
    """Generate a fresh dataset per run and fit it under each mode.

    Every mode sees the same dataset and initial labels within a run. Runs
    use seeds derived from (base seed, run index), so `jobs` never changes
    the results.
    """
    if runs < 1:
        raise ValueError("runs must be at least 1")
    if jobs < 1:
        raise ValueError("jobs must be at least 1")
    modes = [Mode(m) for m in (modes or [config.mode])]
    if jobs == 1:
        chunks = [_run_one(spec, config, r, modes, keep_results) for r in range(runs)]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            chunks = list(ex.map(_run_one, *zip(*[(spec, config, r, modes, keep_results) for r in range(runs)])))
    records = [rec for chunk in chunks for rec in chunk]
    return summarize(records, modes), records


def summarize(records: Sequence[RunRecord], modes: Sequence[Mode]) -> list[ModeSummary]:
    out = []
    for mode in modes:
        rs = [r for r in records if r.mode is mode]
        mis = np.array([r.misclassification for r in rs])
        out.append(
            ModeSummary(
                mode,
                len(rs),
                float(mis.mean()),
                float(mis.std(ddof=1)) if len(rs) > 1 else None,
                float(np.mean([r.iterations for r in rs])),
                float(np.mean([r.seconds for r in rs])),
            )
        )
    return out
