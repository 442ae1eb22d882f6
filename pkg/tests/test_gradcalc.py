import json

import numpy as np
import pytest

from mosfit import graph as gr
from mosfit import models as M
from mosfit.data import Dataset, synth
from mosfit.gradcalc import (CostSpec, Objective, ad_gradient, central_difference, default_deltas,
                             multi_objective_cost, nd_gradient, nd_jacobian, residual_jacobian, rmse)
from mosfit.graph import GraphBuilder

from oracles import rmse_two_pass


def _linear_graph():
    b = GraphBuilder()
    return b.build(b.param("p") * b.input("vds"))


def _iv(vgs, vds, values):
    return Dataset("IV", vgs, vds, values)


@pytest.fixture(scope="module")
def nth_noisy():
    return synth("nth-power-law", M.NTH_REFERENCE, noise=0.05, seed=3)["IV"]


# ---------------------------------------------------------------- rmse


def test_rmse_examples():
    assert rmse([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert rmse([2.0], [0.0]) == 2.0


def test_rmse_matches_two_pass_oracle():
    rng = np.random.default_rng(5)
    a, b = rng.normal(size=125), rng.normal(size=125)
    assert rmse(a, b) == pytest.approx(rmse_two_pass(a, b), rel=1e-14)


def test_rmse_rejects_bad_lengths():
    with pytest.raises(ValueError):
        rmse([1.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        rmse([], [])


# ---------------------------------------------------------------- engines


def test_forward_difference_is_exact_for_a_linear_model():
    ds = _iv([0.0], [3.0], [12.0])
    r = nd_gradient(_linear_graph(), {"p": 2.0}, ds)
    # E = |p*3 - 12| so dE/dp = -3 below the optimum
    assert r.grad["p"] == pytest.approx(-3.0, rel=1e-9)


def test_evaluation_counts_for_the_power_law_model(nth_noisy):
    g = M.build_nth_power_law()
    assert nd_gradient(g, M.NTH_REFERENCE, nth_noisy).model_eval_count == 1125
    assert ad_gradient(g, M.NTH_REFERENCE, nth_noisy).graph_traversal_count == 250


@pytest.mark.parametrize("name", list(M.REGISTRY))
def test_forward_difference_agrees_with_reverse_mode(name):
    spec = M.get_model(name)
    truth = M.REFERENCE_POINTS[name]
    sets = synth(name, truth, noise=0.05, seed=1)
    # away from the optimum: forward-difference truncation swamps the tiny gradients near it
    rng = np.random.default_rng(0)
    params = {k: v * (1 + rng.uniform(-0.1, 0.1)) for k, v in truth.items()}
    cost = CostSpec([Objective(g, sets[k]) for k, g in spec.graphs().items()]).freeze_scales()
    ad, nd = cost.gradient(params, "ad"), cost.gradient(params, "nd")
    for p in cost.names:
        assert abs(nd.grad[p] - ad.grad[p]) <= 1e-3 * (abs(ad.grad[p]) + 1e-12), p


def test_gradient_at_optimum_is_zero():
    ds = _iv([0.0, 0.0], [1.0, 2.0], [2.0, 4.0])
    r = ad_gradient(_linear_graph(), {"p": 2.0}, ds)
    assert r.cost == 0.0 and r.grad == {"p": 0.0}


def test_gradient_is_the_sum_of_per_point_backward_passes(nth_noisy):
    g = M.build_nth_power_law()
    p = {**M.NTH_REFERENCE, "VTH": 2.9}
    ds = nth_noisy.subset(slice(40, 42))
    full = ad_gradient(g, p, ds)
    sim = np.array([gr.forward(g, p, {"vgs": vg, "vds": vd})[0][0] for vg, vd in zip(ds.vgs, ds.vds)])
    r = sim - ds.values
    e = np.sqrt(np.mean(r * r))
    total = dict.fromkeys(g.params, 0.0)
    for j, (vg, vd) in enumerate(zip(ds.vgs, ds.vds)):
        _, tape = gr.forward(g, p, {"vgs": vg, "vds": vd})
        for k, v in gr.backward(g, tape, r[j] / (len(ds) * e)).items():
            total[k] += v
    for k in g.params:
        assert full.grad[k] == pytest.approx(total[k], rel=1e-12)


def test_cost_scales_with_a_common_current_factor(nth_noisy):
    g = M.build_nth_power_law()
    p = {**M.NTH_REFERENCE, "VTH": 2.8}
    base = ad_gradient(g, p, nth_noisy)
    scaled_ds = _iv(nth_noisy.vgs, nth_noisy.vds, 7.0 * nth_noisy.values)
    scaled = ad_gradient(g, {**p, "K": 7.0 * p["K"]}, scaled_ds)
    assert scaled.cost == pytest.approx(7.0 * base.cost, rel=1e-12)
    for k in g.params:
        if k != "K":
            assert scaled.grad[k] / scaled.cost == pytest.approx(base.grad[k] / base.cost, rel=1e-10)


def test_per_point_normalization_equalizes_contributions():
    meas = np.array([1e-3, 1.0, 50.0])
    ds = _iv([1.0, 2.0, 3.0], [1.0, 1.0, 1.0], meas)
    o = Objective(_linear_graph(), ds, normalize=True)
    r = o.residuals(meas * 1.1)
    assert np.allclose(r * r, (0.1) ** 2)


def test_grad_result_serializes():
    ds = _iv([0.0], [2.0], [1.0])
    obj = json.loads(ad_gradient(_linear_graph(), {"p": 1.0}, ds).to_json())
    assert set(obj) == {"cost", "grad", "model_eval_count", "graph_traversal_count"}
    assert obj["grad"] == {"p": 2.0}


def test_default_forward_difference_steps_are_relative():
    d = default_deltas({"a": 5e-8, "b": 0.0, "c": -3.0})
    assert d["a"] == pytest.approx(5e-14, rel=1e-12)
    assert d["b"] == 1e-6 and d["c"] == pytest.approx(3e-6, rel=1e-12)


def test_zero_step_is_rejected():
    with pytest.raises(ValueError):
        nd_gradient(_linear_graph(), {"p": 1.0}, _iv([0.0], [1.0], [2.0]), deltas={"p": 0.0})


# ---------------------------------------------------------------- jacobian


def test_linear_model_jacobian_rows_are_the_inputs():
    ds = _iv([0.0, 0.0, 0.0], [1.0, 2.5, 7.0], [0.0, 0.0, 0.0])
    jac, count = residual_jacobian(_linear_graph(), {"p": 4.0}, ds)
    np.testing.assert_array_equal(jac[:, 0], ds.vds)
    assert count == 6


def test_jacobian_transpose_residual_equals_scaled_gradient(nth_noisy):
    g = M.build_nth_power_law()
    p = {**M.NTH_REFERENCE, "N": 3.1}
    jac, _ = residual_jacobian(g, p, nth_noisy)
    r = gr.forward(g, p, nth_noisy.inputs)[0][0] - nth_noisy.values
    res = ad_gradient(g, p, nth_noisy)
    lhs = jac.T @ r
    m = len(nth_noisy)
    for i, k in enumerate(g.params):
        assert lhs[i] == pytest.approx(m * res.cost * res.grad[k], rel=1e-10)


def test_jacobian_agrees_with_central_differences():
    ds = synth("sp-current", M.SP_REFERENCE)["IV"].subset(slice(0, 125, 11))
    g = M.build_sp_current()
    p = M.SP_REFERENCE
    jac, _ = residual_jacobian(g, p, ds)
    for i, k in enumerate(g.params):
        h = 1e-6 * abs(p[k])
        up = gr.forward(g, {**p, k: p[k] + h}, ds.inputs)[0][0]
        dn = gr.forward(g, {**p, k: p[k] - h}, ds.inputs)[0][0]
        np.testing.assert_allclose(jac[:, i], (up - dn) / (2 * h), rtol=1e-5, err_msg=k)


def test_forward_difference_jacobian_counts():
    ds = synth("nth-power-law", M.NTH_REFERENCE)["IV"]
    _, count = nd_jacobian(M.build_nth_power_law(), M.NTH_REFERENCE, ds)
    assert count == 9 * 125


# ---------------------------------------------------------------- multi-objective


def test_single_objective_composition_equals_plain_gradient(nth_noisy):
    g = M.build_nth_power_law()
    spec = CostSpec.single(g, nth_noisy)
    cost, grad = multi_objective_cost(spec, M.NTH_REFERENCE)
    plain = ad_gradient(g, M.NTH_REFERENCE, nth_noisy)
    assert cost == plain.cost and grad == plain.grad


def test_shared_parameter_gradients_add_up():
    p = M.MULTI_REFERENCE
    sets = synth("sp-multi", p, noise=0.03, seed=2)
    graphs = M.get_model("sp-multi").graphs()
    iv, cgd = Objective(graphs["IV"], sets["IV"]), Objective(graphs["Cgd"], sets["Cgd"])
    both = CostSpec([iv, cgd]).gradient(p)
    a, b = iv.ad(p), cgd.ad(p)
    assert both.grad["TOX"] == pytest.approx(a.grad["TOX"] + b.grad["TOX"], rel=1e-14)
    assert both.cost == pytest.approx(a.cost + b.cost, rel=1e-14)


def test_full_composition_has_thirteen_gradient_entries():
    p = M.MULTI_REFERENCE
    sets = synth("sp-multi", p, noise=0.03, seed=2)
    graphs = M.get_model("sp-multi").graphs()
    spec = CostSpec([Objective(graphs[k], sets[k]) for k in ("IV", "Cds", "Cgd")]).freeze_scales()
    cost, grad = multi_objective_cost(spec, p)
    assert len(grad) == 13 and cost > 0


def test_weighted_scaled_cost_and_residual_forms_agree():
    p = {**M.MULTI_REFERENCE, "VFBD": 0.2, "RD": 3e-3}
    sets = synth("sp-multi", M.MULTI_REFERENCE)
    graphs = M.get_model("sp-multi").graphs()
    spec = CostSpec([Objective(graphs["IV"], sets["IV"], weight=2.0),
                     Objective(graphs["Cgd"], sets["Cgd"], weight=0.5)]).freeze_scales()
    r = spec.residuals(p)
    assert spec.cost_from_residuals(r) == pytest.approx(spec.cost(p), rel=1e-13)
    errs = spec.errors(p)
    expected = sum(o.weight * (e / o.scale) ** 2 for o, e in zip(spec.objectives, errs))
    assert float(r @ r) == pytest.approx(expected, rel=1e-13)


def test_initial_scale_mode_normalizes_each_term_to_one():
    p = {**M.MULTI_REFERENCE, "VFBD": 0.2, "RD": 3e-3, "ADS": 0.03}
    sets = synth("sp-multi", M.MULTI_REFERENCE)
    graphs = M.get_model("sp-multi").graphs()
    spec = CostSpec([Objective(graphs[k], sets[k]) for k in ("IV", "Cds", "Cgd")]).freeze_scales(p, "initial")
    assert spec.cost(p) == pytest.approx(3.0, rel=1e-12)


def test_empty_objective_is_rejected():
    with pytest.raises(ValueError):
        Objective(_linear_graph(), _iv([], [], []))


def test_central_difference_helper():
    f = lambda q: q["a"] ** 3 + q["b"]  # noqa: E731
    d = central_difference(f, {"a": 2.0, "b": 1.0}, ["a", "b"])
    assert d["a"] == pytest.approx(12.0, rel=1e-8) and d["b"] == pytest.approx(1.0, rel=1e-8)
