"""Starting values for the surface-potential model read off measured curves.

Each estimator looks at one feature of one characteristic: slopes of the
output curves, the knee of the gate-source capacitance, the accumulation
plateau of the gate-drain capacitance and the depletion tails of the
capacitances. :func:`estimate_all` chains them into a full 13-parameter
starting point with a provenance tag per parameter.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import graph as gr
from .data import Dataset
from .models import (CM2, DEFAULT_CONSTANTS, PER_CM3, SP_MULTI_PARAMS, Constants,
                     acceptor_from_vbi, build_sp_current, builtin_voltage)

__all__ = [
    "InitError", "InitEstimate", "default_seed", "estimate_lambda_rd", "estimate_k_theta",
    "estimate_vfbc", "estimate_cap_chain", "estimate_scale", "estimate_all",
    "DEFAULT_VBI", "MEASURED", "DEFAULT", "DERIVED", "USER_INPUT",
]

MEASURED, DEFAULT, DERIVED, USER_INPUT = "measured-slope", "default", "derived-equation", "requires user input"

# built-in voltage implied by the reference dopings; used when no diode data exist
DEFAULT_VBI = builtin_voltage(1.313e17, 5.266e15)


class InitError(ValueError):
    pass


@dataclass
class InitEstimate:
    params: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def set(self, name, value, how):
        self.params[name] = float(value)
        self.provenance[name] = how

    def merge(self, other: "InitEstimate") -> "InitEstimate":
        self.params.update(other.params)
        self.provenance.update(other.provenance)
        return self

    def to_json(self) -> str:
        return json.dumps({"params": self.params, "provenance": self.provenance}, indent=2)


def default_seed() -> InitEstimate:
    est = InitEstimate()
    est.set("TOX", 5.0e-8, DEFAULT)
    est.set("DELTA", 0.8, DEFAULT)
    return est


def _line(x, y):
    """Least-squares slope and intercept."""
    slope, icpt = np.polyfit(np.asarray(x, float), np.asarray(y, float), 1)
    return float(slope), float(icpt)


def _top_vgs_curve(iv: Dataset):
    if iv.kind != "IV":
        raise InitError("expected an I-V dataset")
    vg = iv.vgs.max()
    sel = iv.vgs == vg
    order = np.argsort(iv.vds[sel])
    return iv.vds[sel][order], iv.values[sel][order]


def estimate_lambda_rd(iv: Dataset, sat_fraction: float = 0.4, lin_max: float = 2.0):
    """LAMBDA from the saturation slope over intercept, RD from the near-origin inverse slope.

    Both use the output curve at the highest gate voltage. Saturation is the
    top ``sat_fraction`` of the drain-voltage range; the near-origin segment
    is ``0 < Vds <= lin_max``.
    """
    vd, i = _top_vgs_curve(iv)
    lo, hi = vd.min(), vd.max()
    sat = vd >= hi - sat_fraction * (hi - lo)
    lin = (vd > 0) & (vd <= lin_max)
    if sat.sum() < 3 or lin.sum() < 3:
        raise InitError("need at least 3 points in both the saturation and near-origin segments")
    s_sat, i_sat = _line(vd[sat], i[sat])
    s_lin, _ = _line(vd[lin], i[lin])
    if i_sat <= 0 or s_lin <= 0:
        raise InitError("output curve is not increasing near the origin")
    return s_sat / i_sat, 1.0 / s_lin


def estimate_k_theta(iv: Dataset, sat_vds: float | None = None):
    """Transconductance gain in saturation and THETA from the linear region.

    The gain is the slope of Id against Vgs at the highest drain voltage.
    THETA comes from the lowest drain voltage, where the current follows
    ``I (1 + THETA Vgs) = A (Vgs - V0)``; rearranged as
    ``I = A Vgs - A V0 - THETA I Vgs`` this is linear in the unknowns.
    """
    vds_levels = np.unique(iv.vds[iv.vds > 0])
    if len(vds_levels) == 0:
        raise InitError("no positive drain voltages")
    vsat = vds_levels.max() if sat_vds is None else sat_vds
    sat = iv.vds == vsat
    lin = iv.vds == vds_levels.min()
    if sat.sum() < 4 or lin.sum() < 4:
        raise InitError("need Id-Vgs slices with at least 4 gate voltages")
    gain, _ = _line(iv.vgs[sat], iv.values[sat])
    vg, i = iv.vgs[lin], iv.values[lin]
    a = np.column_stack([vg, np.ones_like(vg), -i * vg])
    coef, *_ = np.linalg.lstsq(a, i, rcond=None)
    return gain, float(coef[2])


def _smooth3(y):
    y = np.asarray(y, float)
    out = y.copy()
    out[1:-1] = (y[:-2] + y[1:-1] + y[2:]) / 3.0
    return out


def estimate_vfbc(cgs: Dataset) -> float:
    """Gate voltage where the gate-source capacitance starts to bend downward.

    The curve is smoothed with a 3-point moving average; the knee is the
    interior point of most negative second difference.
    """
    order = np.argsort(cgs.vgs)
    v, c = cgs.vgs[order], _smooth3(cgs.values[order])
    if len(v) < 5:
        raise InitError("too few Cgs points")
    d2 = c[:-2] - 2.0 * c[1:-1] + c[2:]
    d2 = d2[1:-1]  # drop points touched by the unsmoothed ends
    scale = np.max(np.abs(c))
    if scale == 0 or np.min(d2) >= -1e-9 * scale:
        raise InitError("no knee in the Cgs curve")
    return float(v[2 + int(np.argmin(d2))])


def _cdep_from_cgd(cgd_val, coxd):
    inv = 1.0 / cgd_val - 1.0 / coxd
    if np.any(inv <= 0):
        raise InitError("Cgd reaches the oxide plateau where depletion is expected")
    return 1.0 / inv


def _descend_to(v, c, level):
    """Walk down from the highest Vgd until ``c`` drops to ``level`` or bottoms out."""
    for k in range(len(v) - 1, 0, -1):
        if c[k - 1] <= level:
            t = (level - c[k - 1]) / (c[k] - c[k - 1]) if c[k] != c[k - 1] else 0.0
            return float(v[k - 1] + t * (v[k] - v[k - 1]))
        if c[k - 1] > c[k]:
            return float(v[k])
    return None


def estimate_cap_chain(cgd: Dataset, cds: Dataset, tox: float, vbi: float = DEFAULT_VBI,
                       c: Constants = DEFAULT_CONSTANTS, ref_vds: float = 10.0) -> InitEstimate:
    """COXD, VFBD, AGD, ND, NA and ADS from the capacitance curves.

    COXD is the accumulation plateau of Cgd. AGD is the gate-drain overlap
    area implied by COXD and the oxide thickness. ND follows from the
    junction approximation of the depletion capacitance at the most
    negative Vgd. VFBD is where Cgd crosses its flat-band value, which
    depends on ND, so the two are refined together starting from the point
    of steepest descent. NA comes from the built-in voltage and ADS from Cds
    at the drain voltage nearest ``ref_vds``.
    """
    vgd = cgd.vgd
    order = np.argsort(vgd)
    v, cv = vgd[order], cgd.values[order]
    if len(v) < 5:
        raise InitError("too few Cgd points")
    sm = _smooth3(cv)
    coxd = float(np.max(sm[1:-1]))
    if not np.max(sm) > 1.02 * np.min(sm):
        raise InitError("no accumulation plateau in Cgd")
    agd = coxd * tox / c.eps_ox / CM2
    slope = np.gradient(sm, v)
    vfbd = float(v[int(np.argmax(slope))])
    qe = c.q * c.eps_sic
    for _ in range(3):
        cdep = _cdep_from_cgd(cv[0], coxd)
        span = vfbd - v[0]
        if span <= 0:
            raise InitError("no depletion point below the flat-band estimate")
        nd = 2.0 * span * (cdep / (agd * CM2)) ** 2 / qe / PER_CM3
        # flat-band MOS capacitance and the Cgd level it implies
        c_fb = agd * CM2 * math.sqrt(2.0 * qe * nd * PER_CM3 / c.phi_t)
        level = coxd * c_fb / (coxd + c_fb)
        found = _descend_to(v, sm, level)
        if found is None:
            break
        vfbd = found
    if not (nd > 0 and math.isfinite(nd)):
        raise InitError("non-positive ND from the depletion tail")
    na = acceptor_from_vbi(vbi, nd, c)
    if not (na > 0 and math.isfinite(na)):
        raise InitError("non-positive NA from the built-in voltage")
    j = int(np.argmin(np.abs(cds.vds - ref_vds)))
    ads = cds.values[j] / math.sqrt(qe * nd * PER_CM3 / (2.0 * (vbi + cds.vds[j]))) / CM2

    est = InitEstimate()
    est.set("COXD", coxd, MEASURED)
    est.set("VFBD", vfbd, MEASURED)
    est.set("AGD", agd, DERIVED)
    est.set("ND", nd, DERIVED)
    est.set("NA", na, DERIVED)
    est.set("VBI", vbi, DEFAULT)
    est.set("ADS", ads, DERIVED)
    return est


def estimate_scale(iv: Dataset, partial: dict, c: Constants = DEFAULT_CONSTANTS, passes: int = 3) -> float:
    """SCALE minimizing the squared current error with every other parameter fixed.

    The current is proportional to SCALE apart from the series-resistance
    feedback, so a few least-squares rescalings settle it.
    """
    g = build_sp_current(c)
    scale = partial.get("SCALE", 1e6)
    for _ in range(passes):
        out, _ = gr.forward(g, {**partial, "SCALE": scale}, iv.inputs)
        sim = np.broadcast_to(out[0], iv.values.shape)
        denom = float(sim @ sim)
        if denom <= 0:
            raise InitError("model current vanishes on the data grid")
        scale *= float(sim @ iv.values) / denom
    return scale


def estimate_all(iv: Dataset, cgs: Dataset | None = None, cgd: Dataset | None = None,
                 cds: Dataset | None = None, vbi: float | None = None,
                 c: Constants = DEFAULT_CONSTANTS) -> InitEstimate:
    """Full starting point for the surface-potential model.

    Parameters whose data are missing are marked as requiring user input
    and left out of ``params``.
    """
    est = default_seed()
    lam, rd = estimate_lambda_rd(iv)
    est.set("LAMBDA", lam, MEASURED)
    est.set("RD", rd, MEASURED)
    _, theta = estimate_k_theta(iv)
    est.set("THETA", max(theta, 0.0), MEASURED)
    if cgs is not None:
        est.set("VFBC", estimate_vfbc(cgs), MEASURED)
    else:
        est.provenance["VFBC"] = USER_INPUT
    if cgd is not None and cds is not None:
        chain = estimate_cap_chain(cgd, cds, est.params["TOX"],
                                   DEFAULT_VBI if vbi is None else vbi, c)
        if vbi is not None:
            chain.provenance["VBI"] = "supplied"
        est.merge(chain)
    else:
        for name in ("COXD", "VFBD", "AGD", "ND", "NA", "ADS"):
            est.provenance[name] = USER_INPUT
    needed = ("TOX", "NA", "LAMBDA", "VFBC", "THETA", "DELTA", "RD")
    if all(n in est.params for n in needed):
        est.set("SCALE", estimate_scale(iv, {n: est.params[n] for n in needed}, c), DERIVED)
    else:
        est.provenance["SCALE"] = USER_INPUT
    return est


def missing(est: InitEstimate, names=SP_MULTI_PARAMS) -> list:
    return [n for n in names if n not in est.params]
