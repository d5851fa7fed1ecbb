"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line that is printed in the terminal summary.
Benchmark fits are computed once per session and shared by the checks that
inspect their step diagnostics. Run alone with `pytest -m acceptance -s`.
"""
import logging
import time
from dataclasses import replace

import numpy as np
import pytest

from sparsekma import cli
from sparsekma.criterion import CriterionProfile, bcss_centroid_fast, bcss_pairwise
from sparsekma.engine import EngineConfig, Mode, tune_k
from sparsekma.grid import AffineWarp, Interval, SampledCurve, UniformGrid, curve_warp, interp_uniform, warp_invert
from sparsekma.metrics import dist_l2_weighted
from sparsekma.partition import Partition
from sparsekma.simulate import SimSpec, derived_seed, generate, run_benchmark
from sparsekma.weights import DegenerateCriterionError, solve_weight, weighted_objective, zero_count

from conftest import random_curves, record_acceptance
from test_criterion import naive_bcss

pytestmark = pytest.mark.acceptance

RUNS = 20
SIM1_CONFIG = EngineConfig(K=2, m=0.4, tol=1e-3, eps_a=0.01, eps_b=0.01, resolution=200)
SIM2_CONFIG = EngineConfig(K=2, m=0.3, tol=1e-3, eps_a=0.05, eps_b=0.05, resolution=200, stop_on_weight_change=False)


@pytest.fixture(scope="session", autouse=True)
def quiet_dip_log():
    # dips are counted in the fit checks; the per-iteration warnings are noise here
    logging.getLogger("sparsekma").setLevel(logging.ERROR)


@pytest.fixture(scope="session")
def sim1_runs():
    t0 = time.perf_counter()
    summ, recs = run_benchmark(SimSpec.sim1(seed=0), SIM1_CONFIG, RUNS, keep_results=True)
    return summ[0], recs, time.perf_counter() - t0


@pytest.fixture(scope="session")
def sim2_runs():
    return run_benchmark(SimSpec.sim2(seed=0), SIM2_CONFIG, RUNS, modes=[Mode.SPARSE_KMA, Mode.KMA], keep_results=True)


@pytest.fixture(scope="session")
def sim2_sweeps():
    out = []
    for r in range(RUNS):
        ds = generate(SimSpec.sim2(seed=derived_seed(100, r)))
        cfg = replace(SIM2_CONFIG, seed=derived_seed(200, r))
        sparse = tune_k(ds.curves, cfg, [2, 3, 4])
        kma = tune_k(ds.curves, replace(cfg, mode=Mode.KMA), [2, 3, 4])
        out.append((sparse, kma))
    return out


@pytest.fixture(scope="session")
def all_fits(sim1_runs, sim2_runs, sim2_sweeps):
    fits = [r.result for r in sim1_runs[1]] + [r.result for r in sim2_runs[1]]
    for sparse, kma in sim2_sweeps:
        fits += [s.fit for s in sparse.per_k] + [s.fit for s in kma.per_k]
    return fits


def test_c1_simulation1_reproduction(sim1_runs):
    summ, recs, _ = sim1_runs
    secs = float(np.mean([r.seconds for r in recs]))
    ok = summ.mean_misclassification <= 0.05 and summ.mean_iterations <= 10 and secs <= 60
    record_acceptance(
        "C1 simulation 1", ok,
        f"mean misclassification {summ.mean_misclassification:.4f} (<= 0.05), "
        f"mean iterations {summ.mean_iterations:.1f} (<= 10), {secs:.1f} s/run (<= 60)",
    )
    assert ok


def test_c2_simulation2_comparison(sim2_runs):
    summ, recs = sim2_runs
    sp, km = summ
    for run in range(RUNS):
        a, b = [r for r in recs if r.run == run]
        assert a.digest == b.digest
    gap = km.mean_misclassification - sp.mean_misclassification
    ok = sp.mean_misclassification <= 0.15 and km.mean_misclassification >= 0.25 and gap >= 0.10
    record_acceptance(
        "C2 simulation 2", ok,
        f"sparse {sp.mean_misclassification:.4f} (<= 0.15), kma {km.mean_misclassification:.4f} (>= 0.25), "
        f"gap {gap:.4f} (>= 0.10)",
    )
    assert ok


def test_c3_k_tuning_direction(sim2_sweeps):
    hits = sum(1 for s, k in sim2_sweeps if s.p_value(2, 3) > 0.05 and k.p_value(2, 3) < 0.01)
    sp = [s.p_value(2, 3) for s, _ in sim2_sweeps]
    km = [k.p_value(2, 3) for _, k in sim2_sweeps]
    ok = hits >= 16
    record_acceptance(
        "C3 K tuning", ok,
        f"{hits}/{RUNS} sweeps with sparse p(2->3) > 0.05 and kma p(2->3) < 0.01 (need 16); "
        f"sparse p > 0.05 in {sum(p > 0.05 for p in sp)}, kma p < 0.01 in {sum(p < 0.01 for p in km)}",
    )
    assert ok


def test_c4_weight_constraints(all_fits):
    reports = [rep for f in all_fits for rep in f.checks.weight_reports]
    bad = sum(f.checks.weight_constraint_violations for f in all_fits)
    bad_norm = sum(1 for rep in reports if not rep.ok)
    ok = bad == 0 and bad_norm == 0 and len(reports) > 0
    record_acceptance("C4 weight constraints", ok, f"{bad} violations over {len(reports)} weights")
    assert ok


def brute_force_best(g: np.ndarray, k: int, step: float) -> float:
    """Exhaustive search over supports with at most G-k points, vectorised by bitmask.

    For a fixed support S the best unit-norm non-negative w is g+ restricted to
    S and normalised, with value sqrt(step * sum_S g+^2).
    """
    gp2 = np.maximum(g, 0.0) ** 2
    sums = np.zeros(1)
    pops = np.zeros(1, dtype=np.int8)
    for v in gp2:
        sums = np.concatenate([sums, sums + v])
        pops = np.concatenate([pops, pops + 1])
    return float(np.sqrt(step * sums[pops <= g.size - k].max()))


def test_c5_weight_solver_oracle():
    rng = np.random.default_rng(2024)
    worst, checked = 0.0, 0
    for _ in range(200):
        G = int(rng.integers(3, 21))
        grid = UniformGrid.spanning(0.0, float(rng.uniform(0.5, 3.0)), G)
        g = rng.normal(0.5, 1.0, G) * rng.choice([0.0, 1.0], G, p=[0.1, 0.9])
        m = float(rng.uniform(0.0, 0.9))
        k = zero_count(m, G)
        prof = CriterionProfile(grid, g)
        want = brute_force_best(g, k, grid.step)
        try:
            got = weighted_objective(solve_weight(prof, m), prof)
        except DegenerateCriterionError:
            got = 0.0
        worst = max(worst, abs(got - want))
        checked += 1
    ok = worst <= 1e-9
    record_acceptance("C5 weight solver", ok, f"max |objective - brute force| {worst:.2e} over {checked} profiles")
    assert ok


def test_c6_criterion_oracles():
    rng = np.random.default_rng(77)
    fast_err = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 51))
        K = int(rng.integers(2, min(4, n) + 1))
        grid = UniformGrid.spanning(-1, 1, int(rng.integers(5, 40)))
        curves = random_curves(rng, n, grid, p=int(rng.integers(1, 3)))
        part = Partition(rng.permutation(np.arange(n) % K), K)
        a = bcss_pairwise(curves, part).values
        b = bcss_centroid_fast(curves, part).values
        fast_err = max(fast_err, float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(a)))))
    naive_err = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 11))
        K = int(rng.integers(2, min(4, n) + 1))
        grid = UniformGrid.spanning(0, 1, 15)
        curves = random_curves(rng, n, grid, p=int(rng.integers(1, 3)), ragged=bool(rng.integers(2)))
        lab = [int(v) for v in rng.permutation(np.arange(n) % K)]
        got = bcss_pairwise(curves, Partition(lab, K)).values
        want = naive_bcss(curves, lab)
        naive_err = max(naive_err, float(np.max(np.abs(got - want) / np.maximum(1.0, np.abs(want)))))
    ok = fast_err <= 1e-10 and naive_err <= 1e-12
    record_acceptance(
        "C6 criterion oracle", ok, f"centroid vs pairwise {fast_err:.2e} (<= 1e-10), pairwise vs loop {naive_err:.2e} (<= 1e-12)"
    )
    assert ok


def test_c7_w_invariance():
    rng = np.random.default_rng(7)
    dom = Interval(-1.0, 1.0)
    grid = UniformGrid.spanning(-1.0, 1.0, 1000)
    pairs = [
        (lambda x: 1 + 2 * x - x**3, lambda x: 0.5 * x**2 + 0.3 * x),
        (lambda x: 3 * x - 1, lambda x: x**4 - x),
    ]
    wf = lambda x: 1 + 0.5 * np.cos(3 * x)  # noqa: E731
    exact_err = interp_err = 0.0
    per_pair = []
    for f1, f2 in pairs:
        pair_err = 0.0
        c1 = SampledCurve.from_function("f1", f1, dom, grid)
        c2 = SampledCurve.from_function("f2", f2, dom, grid)
        w = wf(grid.points)
        base = dist_l2_weighted(c1, c2, w)
        for _ in range(50):
            h = AffineWarp(float(rng.uniform(0.8, 1.25)), float(rng.uniform(-0.3, 0.3)))
            hinv = warp_invert(h)
            lo, hi = hinv(-1.0), hinv(1.0)
            # exact path: analytic samples of f o h on the preimage grid
            gh = UniformGrid.spanning(lo, hi, 1000)
            e1 = SampledCurve.from_function("f1", lambda x: f1(h(x)), Interval(lo, hi), gh)
            e2 = SampledCurve.from_function("f2", lambda x: f2(h(x)), Interval(lo, hi), gh)
            exact_err = max(exact_err, abs(dist_l2_weighted(e1, e2, wf(h(gh.points))) - base))
            # interpolated path: resample the sampled curves and weight onto an unrelated grid
            tg = UniformGrid.spanning(lo - 0.1, hi + 0.1, 1000)
            i1, i2 = curve_warp(c1, h, tg), curve_warp(c2, h, tg)
            wi = np.nan_to_num(interp_uniform(w, grid, h(tg.points)))
            pair_err = max(pair_err, abs(dist_l2_weighted(i1, i2, wi) - base))
        interp_err = max(interp_err, pair_err)
        per_pair.append(f"{pair_err:.2e} at d={base:.3f}")
    ok = exact_err <= 1e-9 and interp_err <= 1e-3
    record_acceptance(
        "C7 W-invariance", ok,
        f"exact resampling {exact_err:.2e} (<= 1e-9), interpolated {interp_err:.2e} (<= 1e-3; per pair "
        + ", ".join(per_pair) + ")",
    )
    assert ok


def test_c8_per_step_improvement(all_fits):
    steps = sum(f.checks.warp_violations + f.checks.assign_violations + f.checks.weight_violations for f in all_fits)
    sparse = [f for f in all_fits if f.config.mode is Mode.SPARSE_KMA]
    dips = [f.checks.objective_dips for f in sparse]
    over = sum(1 for d in dips if d > 2)
    ok = steps == 0 and over == 0
    record_acceptance(
        "C8 per-step improvement", ok,
        f"{steps} step violations over {len(all_fits)} fits; {over}/{len(sparse)} sparse fits with > 2 objective dips "
        f"(max {max(dips)})",
    )
    assert ok


def test_c9_normalization(all_fits):
    worst = max(f.checks.max_normalization_residual for f in all_fits)
    ok = worst <= 1e-9
    record_acceptance("C9 normalization", ok, f"max per-cluster mean residual {worst:.2e} (<= 1e-9)")
    assert ok


def test_c10_cli_determinism(tmp_path):
    data = tmp_path / "data"
    data.mkdir()
    sim = ["simulate", "--scenario", "sim1", "--seed", "3", "--out", str(data)]
    fit_dir = tmp_path / "fit"
    fit_dir.mkdir()
    fit = ["fit", str(data / "curves.csv"), "--max-iter", "5", "--seed", "1", "--out", str(fit_dir)]

    def snap(d):
        return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.name != "timing.json"}

    sim_snaps, fit_snaps = [], []
    for _ in range(5):
        assert cli.main(sim) == cli.EXIT_OK
        sim_snaps.append(snap(data))
        assert cli.main(fit) == cli.EXIT_OK
        fit_snaps.append(snap(fit_dir))
    ok = all(s == sim_snaps[0] for s in sim_snaps) and all(s == fit_snaps[0] for s in fit_snaps)
    record_acceptance(
        "C10 determinism", ok, f"5 repetitions of simulate ({len(sim_snaps[0])} files) and fit ({len(fit_snaps[0])} files)"
    )
    assert ok
