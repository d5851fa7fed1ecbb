"""Command-line frontend: simulate, fit, tune, benchmark, eval.

Exit codes: 0 success, 2 usage or configuration error, 3 data error,
4 engine error. Outputs go to --out, else $SPARSEKMA_OUT, else the current
directory. Each command writes manifest.json (deterministic) and
timing.json (wall time) next to its outputs.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from . import io as kio
from .engine import EngineConfig, EngineError, fit, tune_k
from .grid import DegenerateWarpError
from .metrics import DegenerateSimilarityError, UndefinedDistanceError
from .partition import EmptyClusterError
from .simulate import Scenario, SimSpec, generate, misclassification, run_benchmark
from .weights import DegenerateCriterionError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_ENGINE = 0, 2, 3, 4
OUT_ENV = "SPARSEKMA_OUT"

VERSION = __version__


class UsageError(Exception):
    pass


# flag name -> EngineConfig field
_ENGINE_FLAGS = {
    "k": "K",
    "m": "m",
    "metric": "metric",
    "eps_a": "eps_a",
    "eps_b": "eps_b",
    "tol": "tol",
    "max_iter": "max_iter",
    "resolution": "resolution",
    "seed": "seed",
    "mode": "mode",
    "robust_templates": "robust_templates",
    "no_weight_stop": "stop_on_weight_change",
}

_SIM_FLAGS = {
    "n_per_class": "n_per_class",
    "q_mean": "q_mean",
    "q_sd": "q_sd",
    "a_range": "a_range",
    "b_range": "b_range",
    "phase_shift": "phase_cluster_shift",
    "sim_resolution": "resolution",
    "data_seed": "seed",
}


def _pair(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'lo,hi', got {text!r}") from None
    return lo, hi


def _k_range(text: str) -> list[int]:
    try:
        lo, hi = (int(v) for v in text.split(".."))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'lo..hi', got {text!r}") from None
    if lo > hi:
        raise argparse.ArgumentTypeError(f"empty K range {text!r}: lower end exceeds upper end")
    return list(range(lo, hi + 1))


def _modes(text: str) -> list[str]:
    modes = [m.strip() for m in text.split(",") if m.strip()]
    for m in modes:
        if m not in ("sparse", "kma"):
            raise argparse.ArgumentTypeError(f"unknown mode {m!r}")
    return modes


def _engine_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("engine")
    g.add_argument("--k", type=int, help="number of clusters (default 2)")
    g.add_argument("--m", type=float, help="zero-measure fraction of the weight (default 0.4)")
    g.add_argument("--metric", choices=["l2", "h1"], help="distance (l2) or derivative similarity (h1)")
    g.add_argument("--eps-a", type=float, help="per-iteration dilation bound (default 0.01)")
    g.add_argument("--eps-b", type=float, help="per-iteration shift bound (default 0.01)")
    g.add_argument("--tol", type=float, help="stopping tolerance (default 0.001)")
    g.add_argument("--max-iter", type=int, help="iteration cap (default 50)")
    g.add_argument("--resolution", type=int, help="common grid points (default 200)")
    g.add_argument("--seed", type=int, help="initial-label seed (default 0)")
    g.add_argument("--mode", choices=["sparse", "kma"], help="sparse KMA or plain KMA")
    g.add_argument("--robust-templates", action="store_true", default=None, help="loess templates")
    g.add_argument(
        "--no-weight-stop", action="store_false", default=None,
        help="stop on distance and labels only, ignoring the weight change",
    )


def _sim_args(p: argparse.ArgumentParser, seed_flag: str) -> None:
    g = p.add_argument_group("simulation")
    g.add_argument("--scenario", choices=[s.value for s in Scenario], help="default sim1")
    g.add_argument("--n-per-class", type=int)
    g.add_argument("--q-mean", type=float)
    g.add_argument("--q-sd", type=float)
    g.add_argument("--a-range", type=_pair, metavar="LO,HI")
    g.add_argument("--b-range", type=_pair, metavar="LO,HI")
    g.add_argument("--phase-shift", type=float, help="b offset of the second class")
    g.add_argument(
        "--sim-resolution" if seed_flag == "--data-seed" else "--resolution",
        dest="sim_resolution", type=int, help="samples per curve (default 200)",
    )
    g.add_argument(seed_flag, dest="data_seed", type=int, help="dataset seed (default 0)")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or .)")
    p.add_argument("--config", help="JSON file with 'engine' and/or 'simulation' sections")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sparsekma", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {VERSION}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a labelled synthetic dataset")
    _common(p)
    _sim_args(p, "--seed")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="cluster, align and select the domain")
    _common(p)
    p.add_argument("data", help="curve CSV (curve_id, dim, x, value)")
    _engine_args(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("tune", help="fit a range of K and compare within-cluster scores")
    _common(p)
    p.add_argument("data", help="curve CSV")
    p.add_argument("--k-range", type=_k_range, required=True, metavar="LO..HI")
    _engine_args(p)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("benchmark", help="repeated simulate+fit runs with summary statistics")
    _common(p)
    _sim_args(p, "--data-seed")
    _engine_args(p)
    p.add_argument("--runs", type=int, default=20)
    p.add_argument("--modes", type=_modes, help="comma list of sparse,kma (default: --mode)")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("eval", help="misclassification of a fit against a truth CSV")
    _common(p)
    p.add_argument("fit", help="fit.json written by the fit command")
    p.add_argument("truth", help="truth CSV (curve_id, true_label, ...)")
    p.set_defaults(func=cmd_eval)
    return ap


# -- config resolution -----------------------------------------------------


def _load_config(path) -> dict:
    if not path:
        return {}
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise UsageError(f"cannot read config {path}: {e}") from e
    if not isinstance(doc, dict) or set(doc) - {"engine", "simulation"}:
        raise UsageError("config must be a JSON object with 'engine' and/or 'simulation' sections")
    return doc


def _overrides(args, table) -> dict:
    out = {}
    for flag, name in table.items():
        v = getattr(args, flag, None)
        if v is not None:
            out[name] = v
    return out


def resolve_engine(args, doc) -> EngineConfig:
    d = dict(doc.get("engine", {}))
    d.update(_overrides(args, _ENGINE_FLAGS))
    try:
        return EngineConfig.from_dict(d)
    except (TypeError, ValueError) as e:
        raise UsageError(f"invalid engine config: {e}") from e


def resolve_sim(args, doc) -> SimSpec:
    d = dict(doc.get("simulation", {}))
    d.update(_overrides(args, _SIM_FLAGS))
    if getattr(args, "scenario", None):
        d["scenario"] = args.scenario
    scenario = Scenario(d.pop("scenario", "sim1"))
    known = {f.name for f in fields(SimSpec)}
    unknown = set(d) - known
    if unknown:
        raise UsageError(f"unknown simulation keys: {sorted(unknown)}")
    try:
        return SimSpec.sim2(**d) if scenario is Scenario.SIM2 else SimSpec.sim1(**d)
    except (TypeError, ValueError) as e:
        raise UsageError(f"invalid simulation spec: {e}") from e


def _out_dir(args) -> Path:
    return Path(args.out or os.environ.get(OUT_ENV) or ".")


def _manifest(out: Path, args, argv, config: dict, inputs, outputs, seconds: float) -> None:
    kio.write_json(
        out / "manifest.json",
        {
            "tool": "sparsekma",
            "version": VERSION,
            "command": args.command,
            "argv": list(argv),
            "config": config,
            "inputs": [str(p) for p in inputs],
            "outputs": sorted(outputs),
        },
    )
    # wall time lives apart so that the manifest itself is reproducible
    kio.write_json(out / "timing.json", {"seconds": round(seconds, 3)})


# -- commands --------------------------------------------------------------


def cmd_simulate(args, argv) -> int:
    t0 = time.perf_counter()
    spec = resolve_sim(args, _load_config(args.config))
    out = _out_dir(args)
    ds = generate(spec)
    kio.write_curves(out / "curves.csv", ds.curves)
    kio.write_truth(out / "truth.csv", [c.id for c in ds.curves], ds.true_labels, ds.true_warps)
    _manifest(out, args, argv, {"simulation": spec.to_dict()}, [], ["curves.csv", "truth.csv"],
              time.perf_counter() - t0)
    print(f"wrote {len(ds.curves)} curves to {out}")
    return EXIT_OK


def write_fit_outputs(out: Path, res) -> list[str]:
    kio.write_json(out / "fit.json", kio.fit_document(res))
    ids = res.curve_ids
    kio.write_warps(out / "warps.csv", ids, res.warps, res.labels.labels)
    kio.write_profile(out / "weight.csv", res.grid, res.weight.values, "w")
    names = ["fit.json", "warps.csv", "weight.csv", "templates.csv", "aligned.csv", "history.csv"]
    if res.profile is not None:
        kio.write_profile(out / "profile.csv", res.grid, res.profile.values, "g")
        names.append("profile.csv")
    kio.write_templates(out / "templates.csv", res.templates)
    kio.write_aligned(out / "aligned.csv", ids, res.grid, res.aligned)
    kio.write_history(out / "history.csv", res.history)
    return names


def cmd_fit(args, argv) -> int:
    t0 = time.perf_counter()
    config = resolve_engine(args, _load_config(args.config))
    curves = kio.read_curves(args.data)
    out = _out_dir(args)
    res = fit(curves, config)
    names = write_fit_outputs(out, res)
    _manifest(out, args, argv, {"engine": config.to_dict()}, [args.data], names, time.perf_counter() - t0)
    state = "converged" if res.converged else "stopped at max_iter"
    print(f"{state} after {res.iterations} iterations; cluster sizes {res.labels.sizes.tolist()}")
    return EXIT_OK


def cmd_tune(args, argv) -> int:
    t0 = time.perf_counter()
    config = resolve_engine(args, _load_config(args.config))
    curves = kio.read_curves(args.data)
    out = _out_dir(args)
    try:
        rep = tune_k(curves, config, args.k_range)
    except ValueError as e:
        if isinstance(e, (DegenerateCriterionError, DegenerateWarpError, UndefinedDistanceError)):
            raise
        raise UsageError(str(e)) from e
    kio.write_rows(
        out / "diagnostics.csv",
        ("K", "curve_id", "label", "score"),
        (
            (s.K, cid, int(lab), float(v))
            for s in rep.per_k
            for cid, lab, v in zip(s.fit.curve_ids, s.fit.labels.labels, s.scores)
        ),
    )
    kio.write_rows(
        out / "ranksum.csv",
        ("k_from", "k_to", "median_from", "median_to", "p_value"),
        (
            (s1.K, s2.K, s1.median, s2.median, float(rep.p_value(s1.K, s2.K)))
            for s1, s2 in zip(rep.per_k, rep.per_k[1:])
        ),
    )
    _manifest(out, args, argv, {"engine": config.to_dict(), "k_range": args.k_range}, [args.data],
              ["diagnostics.csv", "ranksum.csv"], time.perf_counter() - t0)
    for (k1, k2), p in rep.p_values.items():
        print(f"K {k1} -> {k2}: rank-sum p = {p:.4g}")
    return EXIT_OK


def cmd_benchmark(args, argv) -> int:
    t0 = time.perf_counter()
    doc = _load_config(args.config)
    spec = resolve_sim(args, doc)
    config = resolve_engine(args, doc)
    if args.runs < 1 or args.jobs < 1:
        raise UsageError("--runs and --jobs must be at least 1")
    out = _out_dir(args)
    summaries, records = run_benchmark(spec, config, args.runs, args.modes, jobs=args.jobs)
    kio.write_rows(
        out / "summary.csv",
        ("mode", "runs", "mean_misclassification", "sd_misclassification", "mean_iterations"),
        (
            (s.mode.value, s.runs, s.mean_misclassification,
             "" if s.sd_misclassification is None else s.sd_misclassification, s.mean_iterations)
            for s in summaries
        ),
    )
    kio.write_rows(
        out / "runs.csv",
        ("run", "mode", "data_seed", "fit_seed", "digest", "misclassification", "iterations", "converged"),
        (
            (r.run, r.mode.value, r.data_seed, r.fit_seed, r.digest, r.misclassification, r.iterations,
             int(r.converged))
            for r in records
        ),
    )
    # timings vary between reruns, keep them out of the reproducible files
    kio.write_rows(
        out / "timing.csv",
        ("run", "mode", "seconds"),
        ((r.run, r.mode.value, r.seconds) for r in records),
    )
    _manifest(
        out, args, argv,
        {"engine": config.to_dict(), "simulation": spec.to_dict(), "runs": args.runs,
         "modes": [s.mode.value for s in summaries]},
        [], ["summary.csv", "runs.csv", "timing.csv"], time.perf_counter() - t0,
    )
    for s in summaries:
        sd = "n/a" if s.sd_misclassification is None else f"{s.sd_misclassification:.4f}"
        print(f"{s.mode.value}: misclassification {s.mean_misclassification:.4f} (sd {sd}), "
              f"iterations {s.mean_iterations:.1f}, {s.mean_seconds:.1f} s/run")
    return EXIT_OK


def cmd_eval(args, argv) -> int:
    t0 = time.perf_counter()
    doc = kio.read_fit_document(args.fit)
    truth = kio.read_truth(args.truth)
    ids = [c["id"] for c in doc["curves"]]
    missing = [i for i in ids if i not in truth]
    if missing:
        raise kio.DataError(f"truth file lacks {len(missing)} curve ids, e.g. {missing[0]!r}")
    est = np.array([c["label"] for c in doc["curves"]])
    tru = np.array([truth[i] for i in ids])
    rate = misclassification(est, tru)
    out = _out_dir(args)
    kio.write_rows(out / "eval.csv", ("curves", "misclassification"), [(len(ids), float(rate))])
    _manifest(out, args, argv, {}, [args.fit, args.truth], ["eval.csv"], time.perf_counter() - t0)
    print(f"misclassification {rate:.4f} over {len(ids)} curves")
    return EXIT_OK


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args, argv)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except kio.DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (EngineError, EmptyClusterError, DegenerateCriterionError, DegenerateWarpError,
            UndefinedDistanceError, DegenerateSimilarityError) as e:
        print(f"engine error: {e}", file=sys.stderr)
        return EXIT_ENGINE
    except ValueError as e:
        # remaining ValueErrors come from input validation in the core types
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
