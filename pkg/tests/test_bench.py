import csv
import json
import threading

import numpy as np
import pytest

from mosfit import models as M
from mosfit.bench import (FIELDS, bench_extraction, bench_gradient, theoretical_speedup, write_results)
from mosfit.data import synth
from mosfit.gradcalc import CostSpec
from mosfit.optimize import StopRule


@pytest.fixture(scope="module")
def nth_ds():
    return synth("nth-power-law", M.NTH_REFERENCE, noise=0.02, seed=0)["IV"]


@pytest.fixture(scope="module")
def nth_pair(nth_ds):
    return bench_gradient("nth-power-law", M.NTH_REFERENCE, nth_ds, repetitions=5)


def test_theoretical_speedup():
    assert theoretical_speedup(8) == 4.5
    assert theoretical_speedup(1) == 1.0
    assert theoretical_speedup(13) == 7.0


def test_results_carry_the_evaluation_counts(nth_pair):
    ad, nd = nth_pair
    assert (ad.n_params, ad.m_points) == (8, 125)
    assert nd.model_evals == 9 * 125 and ad.traversals == 2 * 125
    assert ad.repetitions == nd.repetitions == 5
    assert not ad.failed and not nd.failed
    assert ad.speedup_vs_nd == pytest.approx(nd.wall_seconds_per_gradient / ad.wall_seconds_per_gradient)


def test_count_law_holds_for_a_single_point(nth_ds):
    ad, nd = bench_gradient("nth-power-law", M.NTH_REFERENCE, nth_ds.subset(slice(60, 61)), repetitions=5)
    assert nd.model_evals / ad.traversals == theoretical_speedup(8)


def test_results_are_written_as_csv_and_json(tmp_path, nth_pair):
    write_results(list(nth_pair), tmp_path / "b.csv", tmp_path / "b.json")
    rows = list(csv.DictReader(open(tmp_path / "b.csv")))
    assert tuple(rows[0]) == FIELDS
    assert [r["engine"] for r in rows] == ["AD", "ND"]
    assert float(rows[0]["speedup_vs_nd"]) > 0 and rows[1]["speedup_vs_nd"] == ""
    obj = json.loads((tmp_path / "b.json").read_text())
    assert obj[0]["model_evals"] == 0 and obj[1]["model_evals"] == 1125


def test_too_few_repetitions_are_rejected(nth_ds):
    with pytest.raises(ValueError):
        bench_gradient("nth-power-law", M.NTH_REFERENCE, nth_ds, repetitions=3)


def test_timing_refuses_to_share_the_process():
    stop = threading.Event()
    t = threading.Thread(target=stop.wait)
    t.start()
    try:
        with pytest.raises(RuntimeError, match="single thread"):
            bench_gradient("nth-power-law", M.NTH_REFERENCE,
                           synth("nth-power-law", M.NTH_REFERENCE)["IV"], repetitions=5)
    finally:
        stop.set()
        t.join()


def test_domain_failure_is_flagged_not_raised(nth_ds):
    ad, nd = bench_gradient("nth-power-law", {**M.NTH_REFERENCE, "DELTA": 0.0}, nth_ds, repetitions=5)
    assert ad.failed and nd.failed and ad.speedup_vs_nd is None


def test_paired_extraction_shares_the_stop_rule(nth_ds):
    g = M.build_nth_power_law()
    rng = np.random.default_rng(0)
    init = {k: v * (1 + rng.uniform(-0.1, 0.1)) for k, v in M.NTH_REFERENCE.items()}
    target = 0.05 * nth_ds.values.max()
    ad, nd = bench_extraction(lambda: CostSpec.single(g, nth_ds), "lm", init, StopRule(100, target))
    assert ad.terminated_by == nd.terminated_by == "target_reached"
    assert ad.engine == "ad" and nd.engine == "nd"
    # eight parameters: the reverse pass should cost well under the finite-difference sweep
    assert ad.elapsed < nd.elapsed


def test_unknown_optimizer_is_rejected(nth_ds):
    with pytest.raises(ValueError):
        bench_extraction(lambda: None, "newton", dict(M.NTH_REFERENCE), StopRule(1, 0.0))
