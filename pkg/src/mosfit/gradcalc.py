"""Cost functions and the two gradient engines.

The cost of one objective is the root-mean-square error between simulated
and measured values. The forward-difference engine (``nd``) evaluates the
model once at the base point and once more per parameter, i.e. ``(n+1)*m``
model evaluations per gradient. The reverse-mode engine (``ad``) does one
forward and one backward traversal per bias point, ``2*m`` in total,
independently of ``n``. Bias points are evaluated together as array lanes;
the counters still tally one evaluation per bias point.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import graph as gr
from .data import Dataset

__all__ = [
    "I_FLOOR", "rmse", "GradResult", "Objective", "CostSpec", "simulate",
    "ad_gradient", "nd_gradient", "residual_jacobian", "nd_jacobian",
    "multi_objective_cost", "default_deltas", "central_difference",
]

I_FLOOR = 1e-6
ENGINES = ("ad", "nd")


def rmse(meas, sim) -> float:
    meas = np.asarray(meas, dtype=float).ravel()
    sim = np.asarray(sim, dtype=float).ravel()
    if meas.shape != sim.shape:
        raise ValueError(f"length mismatch: {meas.size} measured vs {sim.size} simulated")
    if meas.size == 0:
        raise ValueError("rmse of an empty dataset")
    d = meas - sim
    return float(np.sqrt(np.dot(d, d) / d.size))


@dataclass
class GradResult:
    cost: float
    grad: dict
    model_eval_count: int = 0
    graph_traversal_count: int = 0

    def to_json(self) -> str:
        return json.dumps({"cost": self.cost, "grad": {k: float(v) for k, v in self.grad.items()},
                           "model_eval_count": self.model_eval_count,
                           "graph_traversal_count": self.graph_traversal_count})


def default_deltas(params: Mapping[str, float], rel: float = 1e-6) -> dict:
    """Forward-difference steps proportional to each parameter's magnitude."""
    return {k: rel * abs(v) if v != 0 else rel for k, v in params.items()}


def simulate(g: gr.Graph, params: Mapping[str, float], ds: Dataset) -> np.ndarray:
    out, _ = gr.forward(g, params, ds.inputs)
    return np.broadcast_to(out[0], ds.values.shape).astype(float)


@dataclass
class Objective:
    """One characteristic to fit: a model graph, its data, a weight and a cost scale."""

    graph: gr.Graph
    data: Dataset
    weight: float = 1.0
    scale: float = 1.0
    normalize: bool = False

    def __post_init__(self):
        if len(self.data) == 0:
            raise ValueError("objective with an empty dataset")
        if not self.weight > 0:
            raise ValueError("objective weight must be positive")
        if not self.scale > 0:
            raise ValueError("objective scale must be positive")
        self._denom = np.maximum(np.abs(self.data.values), I_FLOOR) if self.normalize else None

    @property
    def m(self) -> int:
        return len(self.data)

    def residuals(self, sim: np.ndarray) -> np.ndarray:
        r = sim - self.data.values
        return r / self._denom if self._denom is not None else r

    def error(self, sim: np.ndarray) -> float:
        r = self.residuals(sim)
        return float(np.sqrt(np.dot(r, r) / r.size))

    def cost_seed(self, sim: np.ndarray) -> tuple[float, np.ndarray]:
        """Error and dE/dsim per bias point."""
        r = self.residuals(sim)
        e = float(np.sqrt(np.dot(r, r) / r.size))
        if e == 0.0:
            return e, np.zeros_like(r)
        seed = r / (r.size * e)
        if self._denom is not None:
            seed = seed / self._denom
        return e, seed

    def _binding(self, params):
        return {p: params[p] for p in self.graph.params}

    def ad(self, params) -> GradResult:
        bound = self._binding(params)
        out, tape = gr.forward(self.graph, bound, self.data.inputs)
        sim = np.broadcast_to(out[0], self.data.values.shape)
        e, seed = self.cost_seed(sim)
        lanes = gr.backward(self.graph, tape, seed)
        grad = {p: float(np.sum(v)) for p, v in lanes.items()}
        return GradResult(e, grad, 0, 2 * self.m)

    def nd(self, params, deltas=None) -> GradResult:
        bound = self._binding(params)
        deltas = deltas or default_deltas(bound)
        e0 = self.error(simulate(self.graph, bound, self.data))
        grad = {}
        for p in self.graph.params:
            d = deltas[p]
            if d == 0:
                raise ValueError(f"zero difference step for {p}")
            e1 = self.error(simulate(self.graph, {**bound, p: bound[p] + d}, self.data))
            grad[p] = (e1 - e0) / d
        return GradResult(e0, grad, (1 + len(self.graph.params)) * self.m, 0)


def ad_gradient(g: gr.Graph, params, ds: Dataset, normalize: bool = False) -> GradResult:
    return Objective(g, ds, normalize=normalize).ad(params)


def nd_gradient(g: gr.Graph, params, ds: Dataset, deltas=None, normalize: bool = False) -> GradResult:
    return Objective(g, ds, normalize=normalize).nd(params, deltas)


def residual_jacobian(g: gr.Graph, params, ds: Dataset) -> tuple[np.ndarray, int]:
    """Rows d(sim_j)/dp over the graph parameters, plus the traversal count.

    All rows come from one vectorized backward sweep seeded with 1 in every
    lane; that is one forward and one backward traversal per bias point.
    """
    bound = {p: params[p] for p in g.params}
    _, tape = gr.forward(g, bound, ds.inputs)
    lanes = gr.backward(g, tape, np.ones(len(ds)))
    jac = np.column_stack([np.broadcast_to(lanes[p], (len(ds),)) for p in g.params]) \
        if g.params else np.zeros((len(ds), 0))
    return jac, 2 * len(ds)


def nd_jacobian(g: gr.Graph, params, ds: Dataset, deltas=None) -> tuple[np.ndarray, int]:
    bound = {p: params[p] for p in g.params}
    deltas = deltas or default_deltas(bound)
    base = simulate(g, bound, ds)
    cols = []
    for p in g.params:
        cols.append((simulate(g, {**bound, p: bound[p] + deltas[p]}, ds) - base) / deltas[p])
    jac = np.column_stack(cols) if cols else np.zeros((len(ds), 0))
    return jac, (1 + len(g.params)) * len(ds)


def central_difference(f, params: Mapping[str, float], names: Sequence[str], rel: float = 1e-6) -> dict:
    """Central differences of a scalar function of a parameter dict."""
    out = {}
    for p in names:
        h = rel * max(abs(params[p]), 1e-300) if params[p] != 0 else rel
        out[p] = (f({**params, p: params[p] + h}) - f({**params, p: params[p] - h})) / (2 * h)
    return out


@dataclass
class CostSpec:
    """Weighted sum of normalized objective errors over a shared parameter set."""

    objectives: list
    names: tuple = field(default=())

    def __post_init__(self):
        if not self.objectives:
            raise ValueError("cost needs at least one objective")
        if not self.names:
            seen = []
            for o in self.objectives:
                for p in o.graph.params:
                    if p not in seen:
                        seen.append(p)
            self.names = tuple(seen)

    @classmethod
    def single(cls, g: gr.Graph, ds: Dataset, normalize: bool = False) -> "CostSpec":
        return cls([Objective(g, ds, normalize=normalize)])

    @property
    def m(self) -> int:
        return sum(o.m for o in self.objectives)

    def freeze_scales(self, params=None, mode: str = "data") -> "CostSpec":
        """Fix each objective's cost scale for the rest of the run.

        ``data`` uses the RMS of the measured values, making every term a
        relative error. ``initial`` uses the error at ``params``, which
        equalizes the starting terms but blows up any characteristic that
        is already nearly fitted. A zero scale falls back to 1.
        """
        for o in self.objectives:
            if mode == "data":
                v = o.data.values if o._denom is None else o.data.values / o._denom
                e = float(np.sqrt(np.mean(v * v)))
            elif mode == "initial":
                e = o.error(simulate(o.graph, o._binding(params), o.data))
            else:
                raise ValueError(f"unknown scale mode {mode!r}")
            o.scale = e if e > 0 else 1.0
        return self

    def errors(self, params) -> list:
        return [o.error(simulate(o.graph, o._binding(params), o.data)) for o in self.objectives]

    def cost(self, params) -> float:
        return float(sum(o.weight * e / o.scale for o, e in zip(self.objectives, self.errors(params))))

    def gradient(self, params, engine: str = "ad", deltas=None) -> GradResult:
        if engine not in ENGINES:
            raise ValueError(f"unknown engine {engine!r}")
        total = GradResult(0.0, {p: 0.0 for p in self.names})
        for o in self.objectives:
            r = o.ad(params) if engine == "ad" else o.nd(params, deltas)
            f = o.weight / o.scale
            total.cost += f * r.cost
            for p, v in r.grad.items():
                total.grad[p] += f * v
            total.model_eval_count += r.model_eval_count
            total.graph_traversal_count += r.graph_traversal_count
        return total

    def residuals(self, params) -> np.ndarray:
        """Stacked residuals whose squared norm is sum_k w_k (E_k/scale_k)^2."""
        parts = []
        for o in self.objectives:
            sim = simulate(o.graph, o._binding(params), o.data)
            parts.append(o.residuals(sim) * math.sqrt(o.weight / o.m) / o.scale)
        return np.concatenate(parts)

    def cost_from_residuals(self, r: np.ndarray) -> float:
        """:meth:`cost` recovered from a :meth:`residuals` vector without re-simulating."""
        total, start = 0.0, 0
        for o in self.objectives:
            part = r[start:start + o.m]
            start += o.m
            total += math.sqrt(o.weight) * float(np.sqrt(part @ part))
        return total

    def jacobian(self, params, engine: str = "ad", deltas=None) -> tuple[np.ndarray, int]:
        """Jacobian of :meth:`residuals` over :attr:`names` and the evaluation count."""
        blocks, count = [], 0
        for o in self.objectives:
            if engine == "ad":
                j, c = residual_jacobian(o.graph, params, o.data)
            else:
                j, c = nd_jacobian(o.graph, params, o.data, deltas)
            count += c
            if o._denom is not None:
                j = j / o._denom[:, None]
            j = j * (math.sqrt(o.weight / o.m) / o.scale)
            full = np.zeros((o.m, len(self.names)))
            for col, p in enumerate(o.graph.params):
                full[:, self.names.index(p)] = j[:, col]
            blocks.append(full)
        return np.vstack(blocks), count


def multi_objective_cost(spec: CostSpec, params, engine: str = "ad") -> tuple[float, dict]:
    r = spec.gradient(params, engine)
    return r.cost, r.grad
