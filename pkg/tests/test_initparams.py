import numpy as np
import pytest

from mosfit import models as M
from mosfit.data import Dataset, synth, synth_cgs
from mosfit.gradcalc import CostSpec
from mosfit.initparams import (DEFAULT, USER_INPUT, InitError, default_seed, estimate_all,
                               estimate_cap_chain, estimate_k_theta, estimate_lambda_rd, estimate_vfbc)
from mosfit.optimize import ParamSet, StopRule, gradient_descent

# the initial-value column doubles as ground truth for the synthetic curves
TRUTH = {**M.SP_INITIAL, **M.CAP_INITIAL, "AGD": 6.31e-3}


def _iv(**override):
    return synth("sp-current", {**TRUTH, **override}, sweep="extract")["IV"]


@pytest.fixture(scope="module")
def curves():
    return synth("sp-multi", TRUTH, sweep="extract", with_cgs=True)


def test_default_seed_is_exactly_tox_and_delta():
    est = default_seed()
    assert est.params == {"TOX": 5.0e-8, "DELTA": 0.8}
    assert set(est.provenance.values()) == {DEFAULT}


# ---------------------------------------------------------------- output curves


def test_lambda_estimate_within_half_of_truth():
    lam, _ = estimate_lambda_rd(_iv())
    assert abs(lam / TRUTH["LAMBDA"] - 1) <= 0.5


def test_rd_estimate_within_half_of_truth():
    # the near-origin inverse slope is the whole on-resistance, channel included
    _, rd = estimate_lambda_rd(_iv())
    assert abs(rd / TRUTH["RD"] - 1) <= 0.5, f"RD estimate {rd:.4g} vs truth {TRUTH['RD']:.4g}"


def test_rd_estimate_tracks_a_doubled_resistance():
    _, rd1 = estimate_lambda_rd(_iv())
    _, rd2 = estimate_lambda_rd(_iv(RD=2 * TRUTH["RD"]))
    assert abs(rd2 / rd1 / 2 - 1) <= 0.3, f"ratio {rd2 / rd1:.4g}"


def test_flat_saturation_gives_near_zero_lambda():
    vds = np.arange(0.25, 50.01, 0.25)
    ds = Dataset("IV", np.full(vds.size, 14.0), vds, 0.4 * np.minimum(vds, 8.0))
    lam, rd = estimate_lambda_rd(ds)
    assert abs(lam) <= 1e-4 and rd == pytest.approx(2.5, rel=1e-12)


def test_segments_need_three_points():
    vds = np.array([0.5, 20.0, 40.0, 50.0])
    ds = Dataset("IV", np.full(4, 14.0), vds, 0.1 * vds)
    with pytest.raises(InitError):
        estimate_lambda_rd(ds)


def test_theta_estimate_within_half_of_truth():
    _, theta = estimate_k_theta(_iv())
    assert abs(theta / TRUTH["THETA"] - 1) <= 0.5


def test_zero_theta_data_gives_near_zero_theta():
    vgs = np.repeat([6.0, 8.0, 10.0, 12.0, 14.0], 2)
    vds = np.tile([0.5, 50.0], 5)
    # linear-region law with no mobility degradation: I = A (Vgs - V0)
    vals = np.where(vds == 0.5, 0.02 * (vgs - 3.0), 1.5 * (vgs - 3.0) ** 2)
    _, theta = estimate_k_theta(Dataset("IV", vgs, vds, vals))
    assert abs(theta) <= 1e-4


def test_theta_recovered_from_the_linear_region_law():
    vgs = np.repeat([6.0, 8.0, 10.0, 12.0, 14.0], 2)
    vds = np.tile([0.5, 50.0], 5)
    vals = np.where(vds == 0.5, 0.02 * (vgs - 3.0) / (1 + 0.04 * vgs), 1.5 * (vgs - 3.0) ** 2)
    _, theta = estimate_k_theta(Dataset("IV", vgs, vds, vals))
    assert theta == pytest.approx(0.04, rel=1e-9)


def test_gain_is_positive_for_increasing_transfer_curves():
    rng = np.random.default_rng(0)
    vgs = np.repeat([6.0, 8.0, 10.0, 12.0, 14.0], 2)
    vds = np.tile([1.0, 50.0], 5)
    vals = np.cumsum(rng.uniform(0.1, 1.0, size=10))
    gain, _ = estimate_k_theta(Dataset("IV", vgs, vds, vals))
    assert gain > 0


def test_missing_transfer_slice_is_an_error():
    with pytest.raises(InitError):
        estimate_k_theta(Dataset("IV", [6.0, 8.0], [50.0, 50.0], [1.0, 2.0]))


# ---------------------------------------------------------------- Cgs knee


def test_knee_found_near_its_true_location():
    assert abs(estimate_vfbc(synth_cgs(-4.90)) + 4.90) <= 0.5


def test_constant_cgs_has_no_knee():
    v = np.linspace(-10, 10, 50)
    with pytest.raises(InitError):
        estimate_vfbc(Dataset("Cgs", v, np.zeros_like(v), np.full(50, 1e-9)))


@pytest.mark.parametrize("factor", [1e-3, 7.0, 1e4])
def test_knee_is_invariant_to_vertical_scaling(factor):
    ds = synth_cgs(-4.90)
    scaled = Dataset("Cgs", ds.vgs, ds.vds, factor * ds.values)
    assert estimate_vfbc(scaled) == estimate_vfbc(ds)


# ---------------------------------------------------------------- capacitance chain


@pytest.mark.parametrize("name", ["COXD", "VFBD", "AGD", "ND", "NA", "ADS"])
def test_capacitance_chain_within_half_of_truth(curves, name):
    vbi = M.builtin_voltage(TRUTH["NA"], TRUTH["ND"])
    est = estimate_cap_chain(curves["Cgd"], curves["Cds"], TRUTH["TOX"], vbi)
    assert abs(est.params[name] / TRUTH[name] - 1) <= 0.5, est.params[name]


def test_built_in_voltage_round_trip():
    for vbi in (0.05, 0.0874, 2.5):
        na = M.acceptor_from_vbi(vbi, 5.27e15)
        assert M.builtin_voltage(na, 5.27e15) == pytest.approx(vbi, rel=1e-10)


def test_plateau_ignores_extra_depletion_points(curves):
    cgd = curves["Cgd"]
    vgd = cgd.vgd
    deeper = np.linspace(-14.0, -10.5, 8)
    vds = -deeper
    # extend the depletion tail with values below the existing minimum
    extra = np.linspace(0.8, 0.95, 8) * cgd.values.min()
    more = Dataset("Cgd", np.concatenate([cgd.vgs, np.zeros(8)]), np.concatenate([cgd.vds, vds]),
                   np.concatenate([cgd.values, extra]))
    assert vgd.min() > deeper.max()
    a = estimate_cap_chain(cgd, curves["Cds"], TRUTH["TOX"])
    b = estimate_cap_chain(more, curves["Cds"], TRUTH["TOX"])
    assert a.params["COXD"] == b.params["COXD"]


def test_missing_plateau_is_an_error(curves):
    v = np.linspace(0, 10, 30)
    flat = Dataset("Cgd", np.zeros(30), v, np.full(30, 1e-10))
    with pytest.raises(InitError):
        estimate_cap_chain(flat, curves["Cds"], TRUTH["TOX"])


# ---------------------------------------------------------------- full chain


def test_complete_data_give_all_thirteen_parameters(curves):
    est = estimate_all(curves["IV"], curves["Cgs"], curves["Cgd"], curves["Cds"])
    assert set(M.SP_MULTI_PARAMS) <= set(est.params)
    assert USER_INPUT not in est.provenance.values()
    assert est.provenance["VBI"] == DEFAULT


def test_missing_capacitance_data_are_flagged(curves):
    est = estimate_all(curves["IV"])
    for name in ("VFBC", "COXD", "ND", "NA", "SCALE"):
        assert est.provenance[name] == USER_INPUT and name not in est.params


def test_estimates_are_deterministic(curves):
    a = estimate_all(curves["IV"], curves["Cgs"], curves["Cgd"], curves["Cds"])
    b = estimate_all(curves["IV"], curves["Cgs"], curves["Cgd"], curves["Cds"])
    assert a.to_json() == b.to_json()


def test_descent_from_estimate_reaches_the_current_target(curves):
    est = estimate_all(curves["IV"], curves["Cgs"], curves["Cgd"], curves["Cds"])
    init = {k: est.params[k] for k in M.SP_CURRENT_PARAMS}
    iv = synth("sp-current", TRUTH)["IV"]
    rep = gradient_descent(CostSpec.single(M.build_sp_current(), iv), ParamSet(init), StopRule(1000, 0.16))
    assert rep.terminated_by == "target_reached", f"RMSE {rep.final_cost:.3f} A after {rep.n_iter} iterations"
