"""MOSFET compact models expressed as computational graphs.

Every builder returns a :class:`~mosfit.graph.Graph` whose inputs are the
bias voltages ``vgs`` and ``vds`` and whose single output is the simulated
characteristic at that bias (drain current in A or capacitance in F).
Parameters are bound in the units of the published parameter tables
(cm-based doping and areas, metres for oxide thickness); the graphs apply
the SI conversion right at the leaves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from . import graph as gr
from .graph import GraphBuilder, Sym, exp, log, maximum, minimum, sqrt, where, check

__all__ = [
    "Constants", "DEFAULT_CONSTANTS", "ModelSpec", "REGISTRY", "get_model",
    "build_nth_power_law", "build_sp_current", "build_cds", "build_cgd",
    "surface_potential", "NTH_PARAMS", "SP_CURRENT_PARAMS", "SP_CAP_PARAMS",
    "SP_MULTI_PARAMS", "thermal_voltage_kTq", "builtin_voltage", "acceptor_from_vbi",
    "NEWTON_STEPS", "SOLVER_TOL",
]

NEWTON_STEPS = 15
SOLVER_TOL = 1e-9
FLAT_BAND_U = 1e-3  # |phi|/phi_t below which the capacitance uses its series form

# conversion of table units to SI
PER_CM3 = 1e6
CM2 = 1e-4

NTH_PARAMS = ("VTH", "K", "N", "LAMBDA", "THETA", "M", "J", "DELTA")
SP_CURRENT_PARAMS = ("SCALE", "TOX", "NA", "LAMBDA", "VFBC", "THETA", "DELTA", "RD")
SP_CAP_PARAMS = ("ADS", "ND", "COXD", "VFBD", "AGD")
SP_MULTI_PARAMS = SP_CURRENT_PARAMS + SP_CAP_PARAMS


@dataclass(frozen=True)
class Constants:
    k: float = 1.38e-23
    q: float = 1.60e-19
    T: float = 298.0
    phi_t: float = 0.026
    eps_sic: float = 9.7 * 8.85e-12
    eps_ox: float = 3.9 * 8.85e-12
    n_i: float = 4.82e15

    @property
    def kTq(self) -> float:
        return self.k * self.T / self.q


DEFAULT_CONSTANTS = Constants()


def thermal_voltage_kTq(c: Constants = DEFAULT_CONSTANTS) -> float:
    return c.kTq


def builtin_voltage(na: float, nd: float, c: Constants = DEFAULT_CONSTANTS) -> float:
    """Junction built-in voltage from the two doping levels (cm^-3)."""
    return c.kTq * math.log(na * nd / c.n_i ** 2)


def acceptor_from_vbi(vbi: float, nd: float, c: Constants = DEFAULT_CONSTANTS) -> float:
    """Inverse of :func:`builtin_voltage` for the acceptor side."""
    return c.n_i ** 2 / nd * math.exp(vbi / c.kTq)


# ---------------------------------------------------------------------------
# N-th-power-law


def _smooth_vds(vds: Sym, vdsat: Sym, delta: Sym) -> Sym:
    vd = maximum(vds, 1e-12)
    return vd / (1.0 + (vd / vdsat) ** delta) ** (1.0 / delta)


def build_nth_power_law(c: Constants = DEFAULT_CONSTANTS) -> gr.Graph:
    b = GraphBuilder("nth-power-law")
    p = {n: b.param(n) for n in NTH_PARAMS}
    vgs, vds = b.input("vgs"), b.input("vds")
    drive = vgs - p["VTH"]
    ov = maximum(drive, 1e-9)
    vdsat = p["J"] * ov ** p["M"]
    idsat = p["K"] * ov ** p["N"]
    ratio = _smooth_vds(vds, vdsat, p["DELTA"]) / vdsat
    isim = idsat * (2.0 - ratio) * ratio * (1.0 + p["LAMBDA"] * vds) * (1.0 + p["THETA"] * drive)
    return b.build(where(drive, isim, 0.0))


# ---------------------------------------------------------------------------
# surface potential


def surface_potential(vg_eff: Sym, vfb, body: Sym, phi_f, c: Constants = DEFAULT_CONSTANTS,
                      steps: int = NEWTON_STEPS, tol: float = SOLVER_TOL) -> Sym:
    """Unrolled Newton solve of the charge-balance equation.

    Solves ``(a - phi)^2 = body * R(phi)`` with ``a = vg_eff - vfb`` and
    ``R = e^-u + u - 1 + e^-b (e^u - u - 1)``, ``u = phi/phi_t``,
    ``b = (2 phi_f + phi_t)/phi_t``. ``body`` is the squared body factor in
    V^2. The branch with the sign of ``a`` is taken, so ``phi`` has the sign
    of ``a``. Every step is part of the graph; a final check node fails the
    forward pass if the relative residual exceeds ``tol``.
    """
    bld = vg_eff.builder
    pt = c.phi_t
    inv_pt = 1.0 / pt
    a = vg_eff - vfb
    bexp = (2.0 * phi_f + pt) * inv_pt if isinstance(phi_f, Sym) else bld.const((2.0 * phi_f + pt) / pt)
    eb = exp(-bexp)
    sign = where(a, 1.0, -1.0)

    # starting point: smallest of the depletion, inversion and linear
    # estimates above flat band, largest of the accumulation ones below
    gp = body * inv_pt
    disc = maximum(gp * (a - pt) + gp * gp * 0.25, 1e-30)
    phi_dep = a + gp * 0.5 - sqrt(disc)
    ratio = (a * a + 1e-300) / body
    phi_inv = pt * (bexp + log(ratio))
    phi_acc = -pt * log(ratio)
    shrink = a / (1.0 + sqrt(body * 0.5) * inv_pt)
    pos = maximum(minimum(minimum(a, phi_dep), phi_inv), 0.0)
    neg = minimum(maximum(maximum(a, shrink), phi_acc), 0.0)
    phi = where(a, pos, neg)

    def terms(phi):
        u = phi * inv_pt
        em = exp(-u)
        ep = exp(u - bexp)
        r = em + u - 1.0 + ep - eb * (u + 1.0)
        root = sqrt(maximum(body * r, 0.0) + 1e-60)
        return em, ep, root, a - phi - sign * root

    for _ in range(steps):
        em, ep, root, f = terms(phi)
        dr = (1.0 - em + ep - eb) * inv_pt
        fp = -1.0 - sign * body * dr / (2.0 * root)
        phi = phi - f / fp
    _, _, _, f = terms(phi)
    return check(phi, f, phi, tol)


def _body(bld: GraphBuilder, tox: Sym, doping: Sym, c: Constants) -> Sym:
    # (gamma / Cox)^2 with gamma = sqrt(2 eps_sic k T N)
    return (2.0 * c.eps_sic * c.k * c.T * PER_CM3 / c.eps_ox ** 2) * doping * tox * tox


def build_sp_current(c: Constants = DEFAULT_CONSTANTS, rd_passes: int = 5) -> gr.Graph:
    b = GraphBuilder("sp-current")
    p = {n: b.param(n) for n in SP_CURRENT_PARAMS}
    vgs, vds = b.input("vgs"), b.input("vds")
    pt = c.phi_t
    cox = c.eps_ox / p["TOX"]
    gamma = sqrt((2.0 * c.eps_sic * c.k * c.T * PER_CM3) * p["NA"])
    body = _body(b, p["TOX"], p["NA"], c)
    a = vgs - p["VFBC"]

    phi_s = surface_potential(vgs, p["VFBC"], body, 0.0, c)
    gp = body * (1.0 / pt)
    phi_pinch = a + gp * 0.5 - sqrt(maximum(gp * (a - pt) + gp * gp * 0.25, 1e-30))
    vdsat = maximum((phi_pinch - phi_s) * 0.5, 1e-6)

    ts = maximum(phi_s * (1.0 / pt) - 1.0, 1e-12)
    ts32, ts12 = ts ** 1.5, ts ** 0.5
    gain = p["SCALE"] * CM2 / (1.0 + p["THETA"] * vgs)
    front = cox * (a + pt)
    half_cox = 0.5 * cox
    gpt = pt * gamma

    def isim(vd):
        vd = maximum(vd, 1e-12)
        vmod = vd / (1.0 + (vd / vdsat) ** p["DELTA"]) ** (1.0 / p["DELTA"])
        phi_d = surface_potential(vgs, p["VFBC"], body, vmod, c)
        td = maximum(phi_d * (1.0 / pt) - 1.0, 1e-12)
        idd = (front * (phi_d - phi_s) - half_cox * (phi_d * phi_d - phi_s * phi_s)
               - (2.0 / 3.0) * gpt * (td ** 1.5 - ts32) + gpt * (td ** 0.5 - ts12))
        return gain * idd * (1.0 + p["LAMBDA"] * vd)

    current = isim(vds)
    for _ in range(rd_passes):
        current = isim(vds - p["RD"] * current)
    return b.build(current)


def _cds(b: GraphBuilder, ads: Sym, nd: Sym, vbi: Sym, vds: Sym, c: Constants) -> Sym:
    return ads * CM2 * sqrt((c.q * c.eps_sic * PER_CM3) * nd / (2.0 * (vbi + vds)))


def build_cds(c: Constants = DEFAULT_CONSTANTS, derive_vbi: bool = False) -> gr.Graph:
    """Drain-source junction capacitance.

    With ``derive_vbi`` the built-in voltage is computed inside the graph
    from ``NA`` and ``ND`` instead of being a parameter of its own.
    """
    b = GraphBuilder("sp-cds")
    ads, nd = b.param("ADS"), b.param("ND")
    if derive_vbi:
        vbi = c.kTq * log(b.param("NA") * nd * (1.0 / c.n_i ** 2))
    else:
        vbi = b.param("VBI")
    return b.build(_cds(b, ads, nd, vbi, b.input("vds"), c))


def build_cgd(c: Constants = DEFAULT_CONSTANTS) -> gr.Graph:
    """Gate-drain capacitance: oxide capacitance in series with the drift-region MOS capacitance."""
    b = GraphBuilder("sp-cgd")
    p = {n: b.param(n) for n in ("COXD", "AGD", "ND", "VFBD", "TOX")}
    vgs, vds = b.input("vgs"), b.input("vds")
    pt = c.phi_t
    vgd = vgs - vds
    # the drift region is n-type: mirror the gate drive
    drive = p["VFBD"] - vgd
    body = _body(b, p["TOX"], p["ND"], c)
    phi = surface_potential(drive, 0.0, body, vds, c)
    u = phi * (1.0 / pt)
    em = exp(-u)
    ep = exp(u - 3.0 * vds * (1.0 / pt))
    eb = exp(-3.0 * vds * (1.0 / pt))
    num = 1.0 - em + ep - eb
    den = maximum(pt * em + phi - pt + pt * ep - eb * (phi + pt), 1e-300)
    sign = where(drive, 1.0, -1.0)
    shape = sign * num / (2.0 * sqrt(den))
    # near flat band num and den both vanish; divide u out of their series
    small = FLAT_BAND_U ** 2 - u * u
    us = where(small, u, 0.0)
    u2, u3 = us * us, us * us * us
    n1 = (1.0 - 0.5 * us + u2 / 6.0 - u3 / 24.0) + eb * (1.0 + 0.5 * us + u2 / 6.0 + u3 / 24.0)
    d1 = (0.5 - us / 6.0 + u2 / 24.0 - u3 / 120.0) + eb * (0.5 + us / 6.0 + u2 / 24.0 + u3 / 120.0)
    shape = where(small, n1 / (2.0 * sqrt(pt * d1)), shape)
    cdep = p["AGD"] * CM2 * sqrt((2.0 * c.q * c.eps_sic * PER_CM3) * p["ND"]) * shape
    return b.build(p["COXD"] * cdep / (p["COXD"] + cdep))


# ---------------------------------------------------------------------------
# registry


@dataclass(frozen=True)
class ModelSpec:
    """A named model: one graph per dataset kind, sharing parameters by name."""

    name: str
    params: tuple
    builders: dict  # dataset kind -> callable(Constants) -> Graph
    bounds: dict = field(default_factory=dict)

    @property
    def kinds(self) -> tuple:
        return tuple(self.builders)

    def graphs(self, c: Constants = DEFAULT_CONSTANTS) -> dict:
        return {k: f(c) for k, f in self.builders.items()}


def _positive(names):
    return {n: (0.0, math.inf) for n in names}


REGISTRY: dict[str, ModelSpec] = {}


def _register(spec: ModelSpec):
    REGISTRY[spec.name] = spec


_register(ModelSpec("nth-power-law", NTH_PARAMS, {"IV": build_nth_power_law},
                    _positive(("K", "J", "DELTA", "M", "N"))))
_register(ModelSpec("sp-current", SP_CURRENT_PARAMS, {"IV": build_sp_current},
                    _positive(("SCALE", "TOX", "NA", "DELTA"))))
_register(ModelSpec("sp-cds", ("ADS", "ND", "VBI"), {"Cds": build_cds},
                    _positive(("ADS", "ND"))))
_register(ModelSpec("sp-cgd", ("COXD", "AGD", "ND", "VFBD", "TOX"), {"Cgd": build_cgd},
                    _positive(("COXD", "AGD", "ND", "TOX"))))
_register(ModelSpec("sp-multi", SP_MULTI_PARAMS,
                    {"IV": build_sp_current,
                     "Cds": lambda c=DEFAULT_CONSTANTS: build_cds(c, derive_vbi=True),
                     "Cgd": build_cgd},
                    _positive(("SCALE", "TOX", "NA", "DELTA", "ADS", "ND", "COXD", "AGD"))))


def get_model(name: str) -> ModelSpec:
    try:
        return REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown model {name!r}; available: {', '.join(REGISTRY)}") from None


# Reference parameter points, in table units.
NTH_REFERENCE = dict(VTH=2.600, K=2.691e-3, N=3.284, LAMBDA=2.606e-3, THETA=3.440e-4,
                     M=1.743, J=0.119, DELTA=1.269)
SP_INITIAL = dict(SCALE=5166360.0, TOX=5.0e-8, NA=1.31e17, LAMBDA=8.69e-3, VFBC=-4.90,
                  THETA=5.91e-3, DELTA=0.80, RD=2.90e-3)
SP_REFERENCE = dict(SCALE=5403054.0, TOX=4.788e-8, NA=1.313e17, LAMBDA=6.110e-3,
                    VFBC=-1.812, THETA=5.912e-3, DELTA=0.6170, RD=2.7178e-3)
CAP_INITIAL = dict(ADS=0.00776, ND=5.27e15, COXD=4.36e-10, VFBD=1.00, AGD=6.31e-5)
MULTI_REFERENCE = dict(SCALE=5644684.0, TOX=4.933e-8, NA=1.313e17, LAMBDA=6.119e-3,
                       VFBC=-1.943, THETA=5.927e-3, DELTA=0.6073, RD=2.021e-3,
                       ADS=0.0250, ND=5.266e15, COXD=4.360e-10, VFBD=0.1055, AGD=5.549e-3)

REFERENCE_POINTS = {
    "nth-power-law": NTH_REFERENCE,
    "sp-current": SP_REFERENCE,
    "sp-multi": MULTI_REFERENCE,
    "sp-cds": dict(ADS=0.0250, ND=5.266e15, VBI=builtin_voltage(1.313e17, 5.266e15)),
    "sp-cgd": dict(COXD=4.360e-10, AGD=5.549e-3, ND=5.266e15, VFBD=0.1055, TOX=4.933e-8),
}
