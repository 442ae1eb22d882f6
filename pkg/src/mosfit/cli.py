"""Command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime or
optimizer error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import graph as gr
from .bench import bench_extraction, bench_gradient, write_results
from .data import (DataError, Dataset, load_csv_kinds, named_sweep, save_csv, sweep_points,
                   synth, write_manifest)
from .gradcalc import CostSpec, Objective, central_difference, simulate
from .initparams import InitError, estimate_all, missing
from .models import REFERENCE_POINTS, REGISTRY, get_model
from .optimize import ParamSet, StopRule, gradient_descent, levenberg_marquardt

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2
GRADCHECK_TOL = 1e-5
OPTIMIZERS = ("gd-adagrad", "gd-plain", "lm")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# shared helpers


def _model(name):
    try:
        return get_model(name)
    except KeyError as exc:
        raise UsageError(exc.args[0]) from None


def _read_params(path) -> dict:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise UsageError(f"parameter file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from None
    if isinstance(obj, dict) and isinstance(obj.get("params"), dict):
        obj = obj["params"]  # manifests and fitted-parameter files
    if not isinstance(obj, dict) or not all(isinstance(v, (int, float)) for v in obj.values()):
        raise UsageError(f"{path}: expected an object of numeric parameter values")
    return {k: float(v) for k, v in obj.items()}


def _params_for(spec, path) -> dict:
    params = _read_params(path) if path else dict(REFERENCE_POINTS.get(spec.name, {}))
    absent = [p for p in spec.params if p not in params]
    if absent:
        raise UsageError(f"missing parameter(s) for {spec.name}: {', '.join(absent)}")
    return {p: params[p] for p in spec.params}


def _sweep(name):
    if name in ("paper", "extract"):
        return name
    try:
        return named_sweep(name)
    except DataError as exc:
        raise UsageError(str(exc)) from None


def _load_data(paths) -> dict:
    sets: dict[str, Dataset] = {}
    for p in paths:
        if not Path(p).is_file():
            raise UsageError(f"data file not found: {p}")
        for kind, ds in load_csv_kinds(p).items():
            if kind in sets:
                raise UsageError(f"{kind} data given more than once")
            sets[kind] = ds
    return sets


def _out_dir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {out}: {exc}") from None
    if not os.access(out, os.W_OK):
        raise UsageError(f"output directory not writable: {out}")
    return out


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def _record_run(out: Path, args, extra=None):
    cfg = {k: v for k, v in vars(args).items() if k != "func"}
    cfg["argv"] = sys.argv[1:]
    if extra:
        cfg.update(extra)
    _write_json(out / "run.json", cfg)


def _threads() -> int:
    raw = os.environ.get("MOSFIT_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"MOSFIT_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise UsageError(f"MOSFIT_THREADS must be a positive integer, got {raw!r}")
    return n


def _cost(spec, sets, normalize=False) -> CostSpec:
    graphs = spec.graphs()
    absent = [k for k in graphs if k not in sets]
    if absent:
        raise UsageError(f"model {spec.name} needs {', '.join(absent)} data")
    cost = CostSpec([Objective(graphs[k], sets[k], normalize=normalize) for k in graphs],
                    names=spec.params)
    if len(graphs) > 1:
        cost.freeze_scales(mode="data")
    return cost


def _initial(spec, args, sets) -> tuple[dict, dict]:
    """Starting values and their provenance."""
    how = args.init
    if how == "auto":
        if "VFBC" not in spec.params:
            raise UsageError(f"automatic initialization is not available for {spec.name}")
        try:
            est = estimate_all(sets["IV"], sets.get("Cgs"), sets.get("Cgd"), sets.get("Cds"), args.vbi)
        except InitError as exc:
            raise UsageError(f"automatic initialization failed: {exc}") from None
        need = missing(est, spec.params)
        if need:
            raise UsageError("requires user input: " + ", ".join(need))
        return {p: est.params[p] for p in spec.params}, {p: est.provenance[p] for p in spec.params}
    if how == "random":
        center = _params_for(spec, args.params)
        rng = np.random.default_rng(args.seed)
        vals = {p: center[p] * (1.0 + rng.uniform(-args.spread, args.spread)) for p in spec.params}
        return vals, {p: f"random(seed={args.seed}, spread={args.spread})" for p in spec.params}
    vals = _params_for(spec, how)
    return vals, {p: f"file:{how}" for p in spec.params}


def _run_optimizer(name, cost, init, stop, engine):
    p = ParamSet(dict(init))
    if name == "lm":
        return levenberg_marquardt(cost, p, stop, engine)
    return gradient_descent(cost, p, stop, engine, mode=name[3:])


def _curves(cost: CostSpec, params, path):
    rows = []
    sims = {}
    for o in cost.objectives:
        try:
            sim = simulate(o.graph, o._binding(params), o.data)
        except ArithmeticError:
            sim = np.full(len(o.data), math.nan)
        sims[o.data.kind] = sim
        for vg, vd, meas, s in zip(o.data.vgs, o.data.vds, o.data.values, sim):
            rows.append(f"{o.data.kind},{vg!r},{vd!r},{meas!r},{float(s)!r}")
    Path(path).write_text("kind,vgs,vds,measured,simulated\n" + "\n".join(rows) + "\n", encoding="utf-8")
    return sims


# ---------------------------------------------------------------------------
# commands


def cmd_synth(args) -> int:
    spec = _model(args.model)
    params = _params_for(spec, args.params)
    if args.noise < 0:
        raise UsageError("--noise must be non-negative")
    sweep = _sweep(args.sweep)
    out = _out_dir(args.out)
    sets = synth(spec.name, params, sweep, args.noise, args.seed, with_cgs=args.with_cgs)
    save_csv(out / "data.csv", *sets.values())
    write_manifest(out / "manifest.json", spec.name, params, sweep, args.noise, args.seed,
                   {"data": "data.csv"})
    print(f"wrote {sum(len(d) for d in sets.values())} rows to {out / 'data.csv'}")
    return EXIT_OK


def _extract_one(args, spec, sets, out: Path) -> int:
    cost = _cost(spec, sets, args.normalize)
    init, provenance = _initial(spec, args, sets)
    stop = StopRule(args.n_max, args.e_target)
    report = _run_optimizer(args.optimizer, cost, init, stop, args.engine)
    report.to_json(out / "report.json")
    report.to_csv(out / "convergence.csv")
    _write_json(out / "params.json", {"params": report.final_params, "initial": init,
                                      "provenance": provenance})
    sims = _curves(cost, report.final_params, out / "curves.csv")
    _record_run(out, args, {"initial_params": init})
    if not args.no_plots and report.iterations:
        from .plotting import plot_convergence, plot_overlay
        plot_convergence({args.engine.upper(): report}, out / "convergence.png")
        for o in cost.objectives:
            if np.all(np.isfinite(sims[o.data.kind])):
                plot_overlay(o.data, sims[o.data.kind], out / f"overlay_{o.data.kind}.png")
    print(f"{out}: {report.terminated_by} after {report.n_iter} iterations, cost {report.final_cost:.6g}")
    if report.terminated_by == "error":
        print(f"optimizer error: {report.message}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_extract(args) -> int:
    spec = _model(args.model)
    if args.n_max < 0:
        raise UsageError("--n-max must be non-negative")
    if args.batch:
        return _extract_batch(args, spec)
    if not args.data:
        raise UsageError("extract needs --data or --batch")
    sets = _load_data(args.data)
    return _extract_one(args, spec, sets, _out_dir(args.out))


def _extract_batch(args, spec) -> int:
    root = Path(args.batch)
    if not root.is_dir():
        raise UsageError(f"batch directory not found: {root}")
    devices = sorted(p for p in root.iterdir() if p.suffix == ".csv" or p.is_dir())
    if not devices:
        raise UsageError(f"no device CSV files or folders in {root}")
    jobs = []
    for dev in devices:
        files = sorted(dev.glob("*.csv")) if dev.is_dir() else [dev]
        jobs.append((dev.stem, _load_data(files)))
    out = _out_dir(args.out)
    workers = _threads()

    def run(job):
        name, sets = job
        try:
            return name, _extract_one(args, spec, sets, _out_dir(out / name))
        except UsageError as exc:
            print(f"{name}: {exc}", file=sys.stderr)
            return name, EXIT_USAGE

    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = dict(pool.map(run, jobs))
    _write_json(out / "batch.json", results)
    return max(results.values())


def cmd_gradcheck(args) -> int:
    spec = _model(args.model)
    params = _params_for(spec, args.params)
    if args.data:
        sets = _load_data(args.data)
    else:
        sets = synth(spec.name, params, _sweep(args.sweep), args.noise, args.seed)
    cost = _cost(spec, sets)
    res = cost.gradient(params, "ad")
    fd = central_difference(cost.cost, params, cost.names, args.rel_step)
    worst = 0.0
    print(f"{'param':>8} {'ad':>15} {'fd':>15} {'rel_err':>10}")
    for p in cost.names:
        a, f = res.grad[p], fd[p]
        denom = max(abs(a), abs(f))
        err = 0.0 if denom == 0 else abs(a - f) / denom
        worst = max(worst, err)
        flag = "ok" if err <= args.tol else "FAIL"
        print(f"{p:>8} {a:15.8e} {f:15.8e} {err:10.2e} {flag}")
    print(f"max relative error {worst:.3e} (tolerance {args.tol:g})")
    return EXIT_OK if worst <= args.tol else EXIT_RUNTIME


def cmd_bench(args) -> int:
    spec = _model(args.model)
    if len(spec.kinds) != 1:
        raise UsageError("bench times single-characteristic models; pick one of "
                         + ", ".join(n for n, s in REGISTRY.items() if len(s.kinds) == 1))
    if args.repetitions < 5:
        raise UsageError("--repetitions must be at least 5")
    params = _params_for(spec, args.params)
    if args.data:
        ds = next(iter(_load_data(args.data).values()))
    else:
        ds = synth(spec.name, params, _sweep(args.sweep), args.noise, args.seed)[spec.kinds[0]]
    out = _out_dir(args.out)
    ad, nd = bench_gradient(spec.name, params, ds, args.repetitions)
    write_results([ad, nd], out / "bench.csv", out / "bench.json")
    _record_run(out, args)
    print(f"AD {ad.wall_seconds_per_gradient * 1e3:.3f} ms  ND {nd.wall_seconds_per_gradient * 1e3:.3f} ms  "
          f"speedup {ad.speedup_vs_nd if ad.speedup_vs_nd is not None else float('nan'):.2f} "
          f"(count-law ceiling {(ad.n_params + 1) / 2:.1f})")
    if args.plot_data:
        init, _ = _initial(spec, args, {spec.kinds[0]: ds})
        graph = spec.graphs()[spec.kinds[0]]
        rep_ad, rep_nd = bench_extraction(lambda: CostSpec([Objective(graph, ds)]), args.optimizer,
                                          init, StopRule(args.n_max, args.e_target))
        base = Path(args.plot_data)
        base.parent.mkdir(parents=True, exist_ok=True)
        with open(base, "w", encoding="utf-8") as fh:
            fh.write("engine,elapsed_seconds,rmse\n")
            for name, rep in (("AD", rep_ad), ("ND", rep_nd)):
                for r in rep.iterations:
                    fh.write(f"{name},{r['elapsed']!r},{r['cost']!r}\n")
        if not args.no_plots:
            from .plotting import plot_convergence
            plot_convergence({"AD": rep_ad, "ND": rep_nd}, base.with_suffix(".png"))
        if "error" in (rep_ad.terminated_by, rep_nd.terminated_by):
            return EXIT_RUNTIME
    return EXIT_OK if not (ad.failed or nd.failed) else EXIT_RUNTIME


def cmd_graphinfo(args) -> int:
    spec = _model(args.model)
    info = {"model": spec.name, "params": list(spec.params), "graphs": {}}
    for kind, builder in spec.builders.items():
        t0 = time.perf_counter()
        g = builder()
        dt = time.perf_counter() - t0
        info["graphs"][kind] = {**gr.graph_stats(g), "build_seconds": dt}
    text = json.dumps(info, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK


def cmd_init(args) -> int:
    sets = _load_data(args.data)
    if "IV" not in sets:
        raise UsageError("initialization needs I-V data")
    try:
        est = estimate_all(sets["IV"], sets.get("Cgs"), sets.get("Cgd"), sets.get("Cds"), args.vbi)
    except InitError as exc:
        print(f"initialization failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    text = est.to_json()
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    need = missing(est)
    if need:
        print("requires user input: " + ", ".join(need), file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="mosfit", description="MOSFET compact-model parameter extraction")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, data=True):
        p.add_argument("--model", required=True, help="registered model: " + ", ".join(REGISTRY))
        p.add_argument("--params", help="JSON file of parameter values (default: reference point)")
        p.add_argument("--sweep", default="paper", help="paper, extract or vgs0:vgs1:step,vds0:vds1:step")
        p.add_argument("--noise", type=float, default=0.0, help="relative Gaussian noise")
        p.add_argument("--seed", type=int, default=0)
        if data:
            p.add_argument("--data", nargs="+", help="CSV file(s) with kind,vgs,vds,value rows")

    p = sub.add_parser("synth", help="generate synthetic data with a ground-truth manifest")
    common(p, data=False)
    p.add_argument("--with-cgs", action="store_true", help="also emit a gate-source capacitance curve")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    def fit_opts(p):
        p.add_argument("--optimizer", choices=OPTIMIZERS, default="lm")
        p.add_argument("--engine", choices=("ad", "nd"), default="ad")
        p.add_argument("--n-max", type=int, default=1000)
        p.add_argument("--e-target", type=float, default=0.0)
        p.add_argument("--init", default="random", help="auto, random or a JSON parameter file")
        p.add_argument("--spread", type=float, default=0.3, help="relative half-width for --init random")
        p.add_argument("--vbi", type=float, default=None, help="built-in voltage for automatic init")
        p.add_argument("--no-plots", action="store_true")

    p = sub.add_parser("extract", help="fit model parameters to data")
    common(p)
    fit_opts(p)
    p.add_argument("--normalize", action="store_true", help="per-point relative residuals")
    p.add_argument("--batch", help="directory of device CSV files or folders")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("gradcheck", help="compare AD gradients with central differences")
    common(p)
    p.add_argument("--tol", type=float, default=GRADCHECK_TOL)
    p.add_argument("--rel-step", type=float, default=1e-6)
    p.set_defaults(func=cmd_gradcheck, noise=0.05)

    p = sub.add_parser("bench", help="time AD against ND gradients")
    common(p)
    fit_opts(p)
    p.add_argument("--repetitions", type=int, default=7)
    p.add_argument("--plot-data", help="also run paired extractions and write their (elapsed, rmse) series here")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("graphinfo", help="graph size and build time")
    p.add_argument("--model", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_graphinfo)

    p = sub.add_parser("init", help="estimate starting parameters from data")
    p.add_argument("--data", nargs="+", required=True)
    p.add_argument("--vbi", type=float, default=None)
    p.add_argument("--out")
    p.set_defaults(func=cmd_init)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (UsageError, DataError, KeyError) as exc:
        msg = exc.args[0] if exc.args else str(exc)
        print(f"mosfit: error: {msg}", file=sys.stderr)
        return EXIT_USAGE
    except (ArithmeticError, gr.TapeError) as exc:
        print(f"mosfit: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
