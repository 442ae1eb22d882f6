"""Datasets, bias sweeps, CSV I/O and synthetic measurement generation."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from . import graph as gr
from .models import DEFAULT_CONSTANTS, Constants, builtin_voltage, get_model

__all__ = [
    "KINDS", "CSV_HEADER", "Sweep", "SweepSpec", "Dataset", "DataError",
    "load_csv", "load_csv_kinds", "save_csv", "sweep_points", "named_sweep",
    "synth", "synth_cgs", "cgs_curve", "write_manifest", "PAPER_SWEEP",
]

KINDS = ("IV", "Cds", "Cgd", "Cgs")
CSV_HEADER = ("kind", "vgs", "vds", "value")


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class Sweep:
    start: float
    stop: float
    step: float

    def __post_init__(self):
        if not self.step > 0:
            raise DataError(f"sweep step must be positive, got {self.step}")
        if self.stop < self.start:
            raise DataError("sweep stop lies below start")

    def values(self) -> np.ndarray:
        n = int(math.floor((self.stop - self.start) / self.step + 1e-9)) + 1
        return self.start + self.step * np.arange(n)


@dataclass(frozen=True)
class SweepSpec:
    """Rectangular grid; vgs is the outer (slow) axis."""

    vgs: Sweep
    vds: Sweep

    def points(self) -> tuple[np.ndarray, np.ndarray]:
        g, d = np.meshgrid(self.vgs.values(), self.vds.values(), indexing="ij")
        return g.ravel(), d.ravel()

    def to_dict(self) -> dict:
        return {"vgs": [self.vgs.start, self.vgs.stop, self.vgs.step],
                "vds": [self.vds.start, self.vds.stop, self.vds.step]}


PAPER_SWEEP = SweepSpec(Sweep(6.0, 14.0, 2.0), Sweep(2.0, 50.0, 2.0))


@dataclass
class Dataset:
    """Measured (or synthetic) values of one characteristic over bias points."""

    kind: str
    vgs: np.ndarray
    vds: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.vgs = np.asarray(self.vgs, dtype=float).ravel()
        self.vds = np.asarray(self.vds, dtype=float).ravel()
        self.values = np.asarray(self.values, dtype=float).ravel()
        if self.kind not in KINDS:
            raise DataError(f"unknown dataset kind {self.kind!r}")
        if not (len(self.vgs) == len(self.vds) == len(self.values)):
            raise DataError("vgs, vds and values differ in length")
        for name in ("vgs", "vds", "values"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise DataError(f"non-finite entries in {name}")
        if self.kind == "IV" and np.any(self.values < 0):
            raise DataError("negative drain current")
        seen = set()
        for i, key in enumerate(zip(self.vgs.tolist(), self.vds.tolist())):
            if key in seen:
                raise DataError(f"duplicate bias point vgs={key[0]} vds={key[1]} (row {i + 1})")
            seen.add(key)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def inputs(self) -> dict:
        return {"vgs": self.vgs, "vds": self.vds}

    @property
    def vgd(self) -> np.ndarray:
        return self.vgs - self.vds

    def subset(self, mask) -> "Dataset":
        return Dataset(self.kind, self.vgs[mask], self.vds[mask], self.values[mask], dict(self.meta))


def _rows(path: Path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        missing = [c for c in CSV_HEADER if c not in header]
        if missing:
            raise DataError(f"{path}: missing column(s) {', '.join(missing)}")
        col = {c: header.index(c) for c in CSV_HEADER}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")
            kind = row[col["kind"]].strip()
            try:
                nums = tuple(float(row[col[c]]) for c in ("vgs", "vds", "value"))
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric cell") from None
            yield lineno, kind, nums


def load_csv_kinds(path) -> dict[str, Dataset]:
    """Load every kind present in a CSV file; returns kind -> Dataset."""
    path = Path(path)
    groups: dict[str, list] = {}
    seen: dict = {}
    for lineno, kind, (vg, vd, val) in _rows(path):
        if kind not in KINDS:
            raise DataError(f"{path}:{lineno}: unknown kind {kind!r}")
        if not all(math.isfinite(x) for x in (vg, vd, val)):
            raise DataError(f"{path}:{lineno}: non-finite value")
        key = (kind, vg, vd)
        if key in seen:
            raise DataError(f"{path}:{lineno}: duplicate bias point (first on line {seen[key]})")
        seen[key] = lineno
        groups.setdefault(kind, []).append((vg, vd, val))
    if not groups:
        raise DataError(f"{path}: no data rows")
    out = {}
    for kind, rows in groups.items():
        a = np.array(rows)
        try:
            out[kind] = Dataset(kind, a[:, 0], a[:, 1], a[:, 2], {"source": str(path)})
        except DataError as exc:
            raise DataError(f"{path}: {exc}") from None
    return out


def load_csv(path, kind: str | None = None) -> Dataset:
    sets = load_csv_kinds(path)
    if kind is None:
        if len(sets) != 1:
            raise DataError(f"{path}: holds kinds {sorted(sets)}; pick one")
        return next(iter(sets.values()))
    if kind not in sets:
        raise DataError(f"{path}: no rows of kind {kind!r}")
    return sets[kind]


def save_csv(path, *datasets: Dataset) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for ds in datasets:
            for vg, vd, val in zip(ds.vgs, ds.vds, ds.values):
                w.writerow((ds.kind, repr(float(vg)), repr(float(vd)), repr(float(val))))


# ---------------------------------------------------------------------------
# sweeps


def sweep_points(kind: str, name: str = "paper") -> tuple[np.ndarray, np.ndarray]:
    """Bias points (vgs, vds) of a named sweep for one dataset kind.

    ``paper`` is the 5 x 25 I-V grid. ``extract`` adds a fine low-Vds
    segment so the series-resistance slope can be read off the data.
    Capacitance sweeps use 300 points: Cds over Vds 0..50 V at zero gate
    bias, Cgd over Vgd -10..2 V, Cgs over Vgs -10..14 V.
    """
    if kind == "IV":
        if name == "paper":
            return PAPER_SWEEP.points()
        if name == "extract":
            vg = PAPER_SWEEP.vgs.values()
            vd = np.concatenate([np.round(np.arange(0.1, 2.0, 0.2), 10), PAPER_SWEEP.vds.values()])
            g, d = np.meshgrid(vg, vd, indexing="ij")
            return g.ravel(), d.ravel()
        raise DataError(f"unknown I-V sweep {name!r} (paper, extract)")
    if kind == "Cds":
        vd = np.linspace(0.0, 50.0, 300)
        return np.zeros_like(vd), vd
    if kind == "Cgd":
        vgd = np.linspace(-10.0, 2.0, 300)
        vd = np.maximum(0.0, -vgd)
        return vgd + vd, vd
    if kind == "Cgs":
        vg = np.linspace(-10.0, 14.0, 300)
        return vg, np.zeros_like(vg)
    raise DataError(f"unknown dataset kind {kind!r}")


def named_sweep(spec: str) -> SweepSpec:
    """Parse ``paper`` or ``vgs0:vgs1:step,vds0:vds1:step``."""
    if spec == "paper":
        return PAPER_SWEEP
    try:
        g, d = spec.split(",")
        return SweepSpec(Sweep(*map(float, g.split(":"))), Sweep(*map(float, d.split(":"))))
    except (ValueError, TypeError):
        raise DataError(f"bad sweep {spec!r}; use 'paper' or 'a:b:step,c:d:step'") from None


# ---------------------------------------------------------------------------
# synthetic data


def cgs_curve(vgs, vfbc: float, c0: float = 2.0e-9, v0: float = 3.0) -> np.ndarray:
    """Gate-source capacitance that is flat below ``vfbc`` and falls like a depletion capacitance above."""
    vgs = np.asarray(vgs, dtype=float)
    return c0 / np.sqrt(1.0 + 2.0 * np.maximum(vgs - vfbc, 0.0) / v0)


def _noisy(values: np.ndarray, noise: float, rng: np.random.Generator) -> np.ndarray:
    if noise < 0:
        raise DataError("noise must be non-negative")
    if noise == 0:
        return values.copy()
    return values * (1.0 + noise * rng.standard_normal(values.shape))


def synth_cgs(vfbc: float, noise: float = 0.0, seed: int = 0, vgs=None) -> Dataset:
    vg = sweep_points("Cgs")[0] if vgs is None else np.asarray(vgs, dtype=float)
    rng = np.random.default_rng(seed)
    return Dataset("Cgs", vg, np.zeros_like(vg), _noisy(cgs_curve(vg, vfbc), noise, rng),
                   {"synthetic": True, "VFBC": vfbc})


def synth(model_name: str, params: Mapping[str, float], sweep="paper", noise: float = 0.0,
          seed: int = 0, constants: Constants = DEFAULT_CONSTANTS,
          with_cgs: bool = False) -> dict[str, Dataset]:
    """Evaluate a registered model over its sweeps and add seeded multiplicative noise.

    ``sweep`` names the I-V sweep or is a :class:`SweepSpec`. Returns one
    dataset per kind the model covers (plus ``Cgs`` when ``with_cgs`` and the
    model has a VFBC parameter).
    """
    spec = get_model(model_name)
    missing = [p for p in spec.params if p not in params]
    if missing:
        raise DataError(f"missing parameter(s) for {model_name}: {', '.join(missing)}")
    rng = np.random.default_rng(seed)
    meta = {"synthetic": True, "model": model_name, "noise": noise, "seed": seed}
    out = {}
    for kind, graph in spec.graphs(constants).items():
        if kind == "IV" and isinstance(sweep, SweepSpec):
            vg, vd = sweep.points()
        else:
            vg, vd = sweep_points(kind, sweep if kind == "IV" else "paper")
        values, _ = gr.forward(graph, dict(params), {"vgs": vg, "vds": vd})
        vals = np.broadcast_to(values[0], vg.shape).astype(float)
        if kind == "IV":
            vals = np.maximum(vals, 0.0)
        out[kind] = Dataset(kind, vg, vd, _noisy(vals, noise, rng), dict(meta))
    if with_cgs and "VFBC" in params:
        out["Cgs"] = synth_cgs(params["VFBC"], noise, seed + 1)
    return out


def write_manifest(path, model_name: str, params: Mapping[str, float], sweep, noise: float,
                   seed: int, files: Mapping[str, str], constants: Constants = DEFAULT_CONSTANTS) -> dict:
    """Ground-truth record of a synthetic dataset."""
    manifest = {
        "model": model_name,
        "params": {k: float(v) for k, v in params.items()},
        "sweep": sweep.to_dict() if isinstance(sweep, SweepSpec) else sweep,
        "noise": noise,
        "seed": seed,
        "files": dict(files),
    }
    if "NA" in params and "ND" in params:
        manifest["VBI"] = builtin_voltage(params["NA"], params["ND"], constants)
    Path(path).write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return manifest
