import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from scipy.stats import kendalltau

from mfgapfill.fixtures import growth_table
from mfgapfill.model import GrowthClass, MediumSpec
from mfgapfill.objectives import (GME_FALSE_NEGATIVE, GME_SYMMETRIC, REGIMES, Betas, ZeroReferenceScore,
                                  TargetSet, compute_targets, dominates, evaluate_predictions,
                                  growth_match_error, kendall_tau, mape, rms_error, scalarize)

G, NG = GrowthClass.GROWTH, GrowthClass.NO_GROWTH


def _targets(rows, column="target"):
    return TargetSet(rows[0].medium, 0.0, {r.medium: getattr(r, column) for r in rows},
                     {r.medium: r.growth_class for r in rows}, {r.medium: r.growth_score for r in rows})


def test_regime_weights():
    assert (REGIMES["cost/error"].cost, REGIMES["cost/error"].error) == (100.0, 1.0)
    assert (REGIMES["error/cost"].cost, REGIMES["error/cost"].error) == (1.0, 100.0)
    assert (REGIMES["cost+error"].cost, REGIMES["cost+error"].error) == (1.0, 1.0)
    for b in REGIMES.values():
        assert (b.gme, b.tau) == (1000.0, 10.0)
    with pytest.raises(ValueError):
        Betas(cost=-1.0)


def test_targets_scale_with_growth_score():
    media = [MediumSpec("a", "a", {}, {}, 200.0), MediumSpec("b", "b", {}, {}, 50.0),
             MediumSpec("c", "c", {}, {}, 0.0, NG)]
    t = compute_targets(media, 0.8)
    assert t.reference_medium == "a"
    assert t.targets == {"a": 0.8, "b": pytest.approx(0.2), "c": 0.0}


def test_zero_reference_score_rejected():
    with pytest.raises(ZeroReferenceScore):
        compute_targets([MediumSpec("a", "a", {}, {}, 0.0)], 1.0)


def test_pa01_targets_regenerate_from_reference_point():
    rows = growth_table("pa01")
    assert len(rows) == 22
    media = [MediumSpec(r.medium, r.medium, {}, {}, r.growth_score, r.growth_class) for r in rows]
    t = compute_targets(media, 1.076)
    assert t.reference_medium == "Citrate"
    for r in rows:
        assert round(t.targets[r.medium], 2) == pytest.approx(r.target, abs=1e-9)


def test_gme_counting_rules():
    pred = {"a": 0.5, "b": 0.0, "c": 0.3, "d": 0.0}
    classes = {"a": G, "b": G, "c": NG, "d": NG}
    assert growth_match_error(pred, classes, rule=GME_SYMMETRIC) == 2
    assert growth_match_error(pred, classes, rule=GME_FALSE_NEGATIVE) == 1
    with pytest.raises(ValueError):
        growth_match_error(pred, classes, rule="other")


def test_gme_threshold_is_strict():
    assert growth_match_error({"a": 1e-6}, {"a": G}) == 1
    assert growth_match_error({"a": 1.1e-6}, {"a": G}) == 0


def test_pa01_baseline_mismatches():
    rows = growth_table("pa01")
    pred = {r.medium: r.baseline for r in rows}
    classes = {r.medium: r.growth_class for r in rows}
    # a predicted-growth NoGrowth medium plus two missed growers
    assert growth_match_error(pred, classes, rule=GME_SYMMETRIC) == 3
    assert growth_match_error(pred, classes, rule=GME_FALSE_NEGATIVE) == 2


def test_kendall_hand_example():
    tau, tau_prime, degenerate = kendall_tau([1, 2, 3, 4], [1, 3, 2, 4])
    assert tau == pytest.approx(4 / 6)
    assert tau_prime == pytest.approx(1 - 4 / 6)
    assert not degenerate


def test_kendall_constant_input_is_degenerate():
    assert kendall_tau([1, 1, 1], [1, 2, 3]) == (0.0, 1.0, True)


def test_kendall_treats_roundoff_as_tie():
    a, _, _ = kendall_tau([1.0, 1.0 + 1e-12, 2.0], [1.0, 2.0, 3.0])
    b, _, _ = kendall_tau([1.0, 1.0, 2.0], [1.0, 2.0, 3.0])
    assert a == b


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5)), min_size=2, max_size=25))
def test_kendall_matches_scipy_tau_b(pairs):
    x, y = (np.array(v, dtype=float) for v in zip(*pairs))
    assume(np.ptp(x) > 0 and np.ptp(y) > 0)
    tau, tau_prime, degenerate = kendall_tau(x, y)
    assert not degenerate
    assert tau == pytest.approx(kendalltau(x, y, variant="b").statistic, abs=1e-12)
    assert -1 <= tau <= 1 and 0 <= tau_prime <= 2


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 10**4), min_size=2, max_size=20, unique=True))
def test_kendall_self_correlation(ints):
    values = [i / 1000 for i in ints]  # spacing well above the tie tolerance
    tau, tau_prime, _ = kendall_tau(values, values)
    assert tau == pytest.approx(1.0) and tau_prime == pytest.approx(0.0)
    rev, _, _ = kendall_tau(values, [-v for v in values])
    assert rev == pytest.approx(-1.0)


def test_rms_and_mape_hand_values():
    t = {"a": 2.0, "b": 1.0, "c": 0.0}
    p = {"a": 1.0, "b": 1.5, "c": 0.5}
    assert rms_error(p, t) == pytest.approx(math.sqrt((1 + 0.25 + 0.25) / 3))
    # zero target skipped
    assert mape(p, t) == pytest.approx(100 * (0.5 + 0.5) / 2)


@settings(max_examples=100, deadline=None)
@given(st.dictionaries(st.text("abcdef", min_size=1, max_size=3), st.floats(0.01, 10), min_size=1))
def test_perfect_predictions(targets):
    assert rms_error(targets, targets) == 0.0
    assert mape(targets, targets) == 0.0


def test_perfect_prediction_evaluation():
    rows = growth_table("kpneu")
    t = _targets(rows)
    ev = evaluate_predictions(dict(t.targets), t, Betas())
    assert ev.tau == pytest.approx(1.0)
    assert ev.rms == 0.0 and ev.mape == 0.0 and ev.gme == 0


def test_kpneu_baseline_metrics():
    rows = growth_table("kpneu")
    ev = evaluate_predictions({r.medium: r.baseline for r in rows}, _targets(rows), Betas())
    assert ev.gme == 0
    assert ev.rms == pytest.approx(0.29, abs=0.01)
    assert ev.mape == pytest.approx(28, abs=2)
    assert ev.tau == pytest.approx(0.61, abs=0.03)


def test_scalarize_and_cost_normalisation():
    t = TargetSet("a", 1.0, {"a": 1.0, "b": 0.5}, {"a": G, "b": G}, {"a": 2.0, "b": 1.0})
    ev = evaluate_predictions({"a": 1.0, "b": 0.0}, t, Betas(cost=2.0), cost_raw=30.0, c0=20.0, n_used=4)
    assert ev.cost == 1.5
    assert ev.gme == 1
    expected = 2.0 * 1.5 + 1000 * 1 + 10 * ev.tau_prime + 1.0 * ev.rms
    assert ev.objective == pytest.approx(expected)
    assert scalarize(ev.components, Betas(cost=2.0)) == pytest.approx(expected)


vec = st.tuples(st.floats(0, 5), st.integers(0, 3), st.floats(0, 2), st.floats(0, 5))


@settings(max_examples=200, deadline=None)
@given(vec, vec, vec)
def test_dominance_is_a_strict_partial_order(a, b, c):
    assert not dominates(a, a)
    if dominates(a, b):
        assert not dominates(b, a)
        if dominates(b, c):
            assert dominates(a, c)


@settings(max_examples=200, deadline=None)
@given(vec, vec)
def test_dominated_point_has_higher_scalarised_objective(a, b):
    if dominates(a, b):
        for betas in REGIMES.values():
            assert scalarize(a, betas) <= scalarize(b, betas)
