"""Timing harness: per-gradient wall time and paired extractions for both engines.

Graph construction happens before any timed section. Timed sections run on
the calling thread only; :func:`bench_gradient` refuses to start when other
Python threads are alive.
"""

from __future__ import annotations

import csv
import json
import statistics
import threading
import time
from dataclasses import asdict, dataclass

from .data import Dataset
from .gradcalc import CostSpec, Objective
from .models import DEFAULT_CONSTANTS, Constants, get_model
from .optimize import FitReport, ParamSet, StopRule, gradient_descent, levenberg_marquardt

__all__ = ["BenchResult", "bench_gradient", "bench_extraction", "write_results",
           "results_to_json", "theoretical_speedup"]

MIN_REPETITIONS = 5
FIELDS = ("engine", "model", "n_params", "m_points", "wall_seconds_per_gradient",
          "repetitions", "speedup_vs_nd", "model_evals", "traversals", "failed")


@dataclass
class BenchResult:
    engine: str
    model: str
    n_params: int
    m_points: int
    wall_seconds_per_gradient: float
    repetitions: int
    speedup_vs_nd: float | None = None
    model_evals: int = 0
    traversals: int = 0
    failed: bool = False


def theoretical_speedup(n_params: int) -> float:
    """Ratio of ND evaluations to AD traversals per gradient."""
    return (n_params + 1) / 2.0


def _single_thread():
    if threading.active_count() != 1:
        raise RuntimeError(f"benchmark needs a single thread, found {threading.active_count()}")


def _cost_for(model_name: str, dataset: Dataset, c: Constants) -> CostSpec:
    spec = get_model(model_name)
    graphs = spec.graphs(c)
    if dataset.kind not in graphs:
        raise ValueError(f"model {model_name} has no {dataset.kind} characteristic")
    return CostSpec([Objective(graphs[dataset.kind], dataset)])


def bench_gradient(model_name: str, params: dict, dataset: Dataset,
                   repetitions: int = 7, c: Constants = DEFAULT_CONSTANTS) -> tuple[BenchResult, BenchResult]:
    """Median wall time per full-dataset gradient for AD and ND; returns (ad, nd)."""
    if repetitions < MIN_REPETITIONS:
        raise ValueError(f"need at least {MIN_REPETITIONS} repetitions")
    _single_thread()
    cost = _cost_for(model_name, dataset, c)
    n = len(cost.names)
    rows = {}
    for engine in ("ad", "nd"):
        times = []
        res = None
        failed = False
        try:
            cost.gradient(params, engine)  # warm-up
            for _ in range(repetitions):
                t0 = time.perf_counter()
                res = cost.gradient(params, engine)
                times.append(time.perf_counter() - t0)
        except ArithmeticError:
            failed = True
        rows[engine] = BenchResult(
            engine.upper(), model_name, n, len(dataset),
            statistics.median(times) if times else float("nan"), len(times),
            model_evals=res.model_eval_count if res else 0,
            traversals=res.graph_traversal_count if res else 0, failed=failed)
    ad, nd = rows["ad"], rows["nd"]
    if not (ad.failed or nd.failed):
        ad.speedup_vs_nd = nd.wall_seconds_per_gradient / ad.wall_seconds_per_gradient
    return ad, nd


def bench_extraction(cost_factory, optimizer: str, init: dict, stop: StopRule,
                     **kwargs) -> tuple[FitReport, FitReport]:
    """Run the same extraction with each engine; returns (ad_report, nd_report).

    ``cost_factory`` builds a fresh :class:`CostSpec` per run so that no
    state carries over between engines.
    """
    _single_thread()
    out = []
    for engine in ("ad", "nd"):
        cost = cost_factory()
        p = ParamSet(dict(init))
        if optimizer == "lm":
            rep = levenberg_marquardt(cost, p, stop, engine, **kwargs)
        elif optimizer in ("gd-adagrad", "gd-plain"):
            rep = gradient_descent(cost, p, stop, engine, mode=optimizer[3:], **kwargs)
        else:
            raise ValueError(f"unknown optimizer {optimizer!r}")
        out.append(rep)
    return out[0], out[1]


def results_to_json(results) -> str:
    return json.dumps([asdict(r) for r in results], indent=2)


def write_results(results, csv_path=None, json_path=None) -> None:
    if csv_path is not None:
        with open(csv_path, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, FIELDS, lineterminator="\n")
            w.writeheader()
            for r in results:
                row = asdict(r)
                row["speedup_vs_nd"] = "" if r.speedup_vs_nd is None else repr(r.speedup_vs_nd)
                w.writerow(row)
    if json_path is not None:
        with open(json_path, "w", encoding="utf-8") as fh:
            fh.write(results_to_json(results) + "\n")
