"""Gradient descent (plain or AdaGrad) and Levenberg-Marquardt drivers."""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .gradcalc import CostSpec
from .graph import DomainError, NonConvergenceError

__all__ = ["ParamSet", "StopRule", "FitReport", "AdaGradState", "adagrad_step",
           "gradient_descent", "levenberg_marquardt", "ADAGRAD_EPS"]

ADAGRAD_EPS = 1e-8
_EVAL_ERRORS = (DomainError, NonConvergenceError, FloatingPointError)


@dataclass
class ParamSet:
    """Parameter values with per-parameter update rates and optional bounds.

    ``eta`` defaults to one hundredth of each starting magnitude.
    """

    values: dict
    eta: dict = field(default_factory=dict)
    bounds: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = {k: float(v) for k, v in self.values.items()}
        for k, v in self.values.items():
            if k not in self.eta:
                self.eta[k] = abs(v) / 100.0 if v != 0 else 1e-2
        for k, e in self.eta.items():
            if not e > 0:
                raise ValueError(f"update rate for {k} must be positive")
        for k, (lo, hi) in self.bounds.items():
            if k in self.values and not lo <= self.values[k] <= hi:
                raise ValueError(f"{k}={self.values[k]} outside bounds [{lo}, {hi}]")

    def project(self, values: dict) -> dict:
        out = dict(values)
        for k, (lo, hi) in self.bounds.items():
            if k in out:
                out[k] = min(max(out[k], lo), hi)
        return out


@dataclass(frozen=True)
class StopRule:
    n_max: int = 1000
    e_target: float = 0.0

    def __post_init__(self):
        if self.n_max < 0:
            raise ValueError("n_max must be non-negative")


@dataclass
class FitReport:
    optimizer: str
    engine: str
    iterations: list = field(default_factory=list)
    final_params: dict = field(default_factory=dict)
    terminated_by: str = ""
    message: str = ""

    @property
    def n_iter(self) -> int:
        """Number of parameter updates performed."""
        return max(len(self.iterations) - 1, 0)

    @property
    def final_cost(self) -> float:
        return self.iterations[-1]["cost"] if self.iterations else math.nan

    @property
    def elapsed(self) -> float:
        return self.iterations[-1]["elapsed"] if self.iterations else 0.0

    def record(self, it, cost, elapsed, evals, traversals):
        self.iterations.append({"iter": it, "cost": float(cost), "elapsed": elapsed,
                                "model_evals": evals, "traversals": traversals})

    def to_dict(self) -> dict:
        return {"optimizer": self.optimizer, "engine": self.engine,
                "terminated_by": self.terminated_by, "message": self.message,
                "n_iter": self.n_iter, "final_cost": self.final_cost,
                "elapsed_seconds": self.elapsed,
                "final_params": self.final_params, "iterations": self.iterations}

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        return text

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("elapsed_seconds", "rmse"))
            for row in self.iterations:
                w.writerow((repr(row["elapsed"]), repr(row["cost"])))


@dataclass
class AdaGradState:
    h: dict = field(default_factory=dict)


def adagrad_step(state: AdaGradState, values: dict, eta: Mapping, grad: Mapping,
                 eps: float = ADAGRAD_EPS) -> dict:
    """One AdaGrad update; mutates ``state`` and returns new values."""
    out = dict(values)
    for k, g in grad.items():
        h = state.h.get(k, 0.0) + g * g
        state.h[k] = h
        out[k] = values[k] - eta[k] * g / (math.sqrt(h) + eps)
    return out


def gradient_descent(cost: CostSpec, init: ParamSet, stop: StopRule, engine: str = "ad",
                     mode: str = "adagrad", deltas=None, eps: float = ADAGRAD_EPS) -> FitReport:
    """Minimize ``cost`` by gradient descent.

    Each iteration computes the gradient at the current point, stops if the
    cost there is at or below the target or ``n_max`` updates were made, and
    otherwise updates every free parameter.
    """
    if mode not in ("adagrad", "plain"):
        raise ValueError(f"unknown descent mode {mode!r}")
    report = FitReport(f"gd-{mode}", engine)
    values = dict(init.values)
    free = [p for p in cost.names if p in values]
    state = AdaGradState()
    elapsed = 0.0
    evals = trav = 0
    it = 0
    while True:
        t0 = time.perf_counter()
        try:
            if it >= stop.n_max:
                # budget spent: only the final cost is needed
                e = cost.cost(values)
                evals += cost.m
                elapsed += time.perf_counter() - t0
                report.record(it, e, elapsed, evals, trav)
                report.terminated_by = "target_reached" if e <= stop.e_target else "max_iter"
                break
            r = cost.gradient(values, engine, deltas)
        except _EVAL_ERRORS as exc:
            report.terminated_by, report.message = "error", str(exc)
            break
        evals += r.model_eval_count
        trav += r.graph_traversal_count
        if r.cost <= stop.e_target:
            elapsed += time.perf_counter() - t0
            report.record(it, r.cost, elapsed, evals, trav)
            report.terminated_by = "target_reached"
            break
        grad = {p: r.grad[p] for p in free}
        if mode == "adagrad":
            values = adagrad_step(state, values, init.eta, grad, eps)
        else:
            values = {**values, **{p: values[p] - init.eta[p] * grad[p] for p in free}}
        values = init.project(values)
        elapsed += time.perf_counter() - t0
        report.record(it, r.cost, elapsed, evals, trav)
        it += 1
    report.final_params = values
    return report


def levenberg_marquardt(cost: CostSpec, init: ParamSet, stop: StopRule, engine: str = "ad",
                        mu0: float = 1e-3, mu_down: float = 0.5, mu_up: float = 2.0,
                        mu_max: float = 1e16, deltas=None, xtol: float = 1e-10) -> FitReport:
    """Damped Gauss-Newton with Marquardt diagonal scaling.

    Works in parameters normalized by their starting magnitudes. A step is
    accepted when it lowers the residual sum of squares, after which the
    damping halves; otherwise the damping doubles and the step is retried.
    ``n_max`` bounds the number of accepted iterations. The run also ends
    as converged once a proposed step, in normalized units, is shorter than
    ``xtol`` or no damping up to ``mu_max`` lowers the residual.
    """
    report = FitReport("lm", engine)
    values = dict(init.values)
    free = [p for p in cost.names if p in values]
    scale = np.array([abs(values[p]) if values[p] != 0 else 1.0 for p in free])
    cols = [cost.names.index(p) for p in free]
    mu = mu0
    elapsed = 0.0
    evals = trav = 0
    m = cost.m

    t0 = time.perf_counter()
    try:
        r = cost.residuals(values)
    except _EVAL_ERRORS as exc:
        report.terminated_by, report.message = "error", str(exc)
        report.final_params = values
        return report
    evals += m
    ssr = float(r @ r)
    e = cost.cost_from_residuals(r)
    elapsed += time.perf_counter() - t0
    report.record(0, e, elapsed, evals, trav)
    it = 0
    while True:
        if e <= stop.e_target:
            report.terminated_by = "target_reached"
            break
        if it >= stop.n_max:
            report.terminated_by = "max_iter"
            break
        t0 = time.perf_counter()
        try:
            jac, count = cost.jacobian(values, engine, deltas)
        except _EVAL_ERRORS as exc:
            report.terminated_by, report.message = "error", str(exc)
            break
        if engine == "ad":
            trav += count
        else:
            evals += count
        j = jac[:, cols] * scale
        a = j.T @ j
        g = j.T @ r
        diag = np.diag(a).copy()
        # near-dead columns would otherwise go undamped and blow the step up
        floor = max(float(diag.max(initial=0.0)), 1.0) * 1e-12
        diag[diag < floor] = floor
        accepted = False
        singular = True
        xnorm = np.array([values[p] for p in free]) / scale
        while mu <= mu_max:
            try:
                step = np.linalg.solve(a + mu * np.diag(diag), -g)
                singular = False
            except np.linalg.LinAlgError:
                mu *= mu_up
                continue
            if float(np.linalg.norm(step)) <= xtol * (1.0 + float(np.linalg.norm(xnorm))):
                break
            trial = dict(values)
            for p, s, dx in zip(free, scale, step):
                trial[p] = values[p] + s * dx
            trial = init.project(trial)
            try:
                rt = cost.residuals(trial)
                evals += m
            except _EVAL_ERRORS:
                mu *= mu_up
                continue
            st = float(rt @ rt)
            if st < ssr:
                values, r, ssr = trial, rt, st
                mu = max(mu * mu_down, 1e-15)
                accepted = True
                break
            mu *= mu_up
        if not accepted:
            elapsed += time.perf_counter() - t0
            if singular:
                report.terminated_by, report.message = "error", "normal equations singular"
            elif mu > mu_max:
                report.terminated_by, report.message = "converged", "no step lowers the residual"
            else:
                report.terminated_by, report.message = "converged", "step below tolerance"
            # the final row carries the total run time, including this last Jacobian
            report.iterations[-1]["elapsed"] = elapsed
            break
        it += 1
        e = cost.cost_from_residuals(r)
        elapsed += time.perf_counter() - t0
        report.record(it, e, elapsed, evals, trav)
    report.final_params = values
    return report
