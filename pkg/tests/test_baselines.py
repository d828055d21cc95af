import numpy as np
import pytest

from mfgapfill.baselines import (MipStatus, SequentialConfig, medium_order, run_lp_seq, run_mip_seq,
                                 solve_gf_milp)
from mfgapfill.fixtures import (integral_root_network, order_sensitivity_network, random_network,
                                search_instance, toy_network)
from mfgapfill.model import AvailabilityState, MediumSpec
from mfgapfill.pfba import solve_pfba
from mfgapfill.search import preprocess

from oracles import max_biomass, milp_bruteforce


def test_medium_order_ties_by_id():
    media = [MediumSpec("b", "x", {}, {}, 1.0), MediumSpec("a", "x", {}, {}, 1.0),
             MediumSpec("c", "x", {}, {}, 5.0)]
    assert [m.id for m in medium_order(media)] == ["c", "a", "b"]


@pytest.mark.parametrize("seed", range(12))
def test_milp_matches_enumeration(seed):
    model, media = random_network(seed, n_metabolites=4, n_reactions=14)
    n_cand = len(model.candidate_indices())
    assert n_cand <= 10
    costs = model.reaction_costs
    for alpha in (1.0, 10.0):
        res = solve_gf_milp(model, media[0], costs, alpha, gap=0.0)
        ref, _ = milp_bruteforce(model, media[0], costs, alpha)
        assert res.status == MipStatus.OPTIMAL
        assert res.objective == pytest.approx(ref, abs=1e-7)
        # the reported selection is itself worth the reported objective
        picked = sum(costs[i] for i in model.candidate_indices() if res.selected[i])
        assert picked - alpha * max_biomass(model, media[0], res.selected) == pytest.approx(ref, abs=1e-7)


def test_milp_on_search_instance_media():
    model, media = search_instance()
    costs = model.reaction_costs
    for medium in media[:3]:
        res = solve_gf_milp(model, medium, costs, 10.0, gap=0.0)
        ref, _ = milp_bruteforce(model, medium, costs, 10.0)
        assert res.objective == pytest.approx(ref, abs=1e-7)


def test_integral_root_needs_no_branching():
    model, media = integral_root_network()
    res = solve_gf_milp(model, media[0], model.reaction_costs, 100.0, gap=0.0)
    assert res.nodes == 1
    assert res.gap == 0.0
    assert res.objective == pytest.approx(2.0 - 100.0)
    assert res.selected[model.reaction_index["take"]]


def test_zero_costs_maximise_biomass():
    model, media = search_instance()
    zero = np.zeros(len(model.reactions))
    for medium in media:
        res = solve_gf_milp(model, medium, zero, 5.0, gap=0.0)
        full = max_biomass(model, medium, np.ones(len(model.reactions), bool))
        assert res.biomass == pytest.approx(full)


def test_bounds_never_exceed_incumbents():
    model, media = random_network(3, 4, 14)
    res = solve_gf_milp(model, media[0], model.reaction_costs, 10.0, gap=0.0)
    assert res.bound <= res.objective + 1e-9
    if res.node_bounds:
        root = res.node_bounds[0]
        assert all(v >= root - 1e-9 for v in res.incumbent_history)


def _fractional_instance():
    # a large-capacity candidate used well below its bound gives a fractional root
    model, media = search_instance()
    return model, media[1]


def test_node_and_time_limits_truncate():
    model, medium = _fractional_instance()
    costs = model.reaction_costs
    root = solve_gf_milp(model, medium, costs, 10.0, gap=0.0)
    assert root.nodes > 1  # instance really branches
    res = solve_gf_milp(model, medium, costs, 10.0, gap=0.0, node_limit=1)
    assert res.status == MipStatus.NODE_LIMIT
    assert res.nodes == 1
    res = solve_gf_milp(model, medium, costs, 10.0, gap=0.0, time_limit=0.0)
    assert res.status == MipStatus.TIME_LIMIT


def test_gap_tolerance_stops_early():
    model, medium = _fractional_instance()
    costs = model.reaction_costs
    exact = solve_gf_milp(model, medium, costs, 10.0, gap=0.0)
    loose = solve_gf_milp(model, medium, costs, 10.0, gap=0.5)
    assert loose.nodes <= exact.nodes
    assert loose.gap <= 0.5
    assert loose.objective >= exact.objective - 1e-9


def _selected(res, model):
    gene = model.gene_mask
    return {model.reactions[i].id for i in np.flatnonzero(res.state.available & ~gene)}


@pytest.mark.parametrize("runner", [run_lp_seq, run_mip_seq])
def test_order_sensitivity(runner):
    cfg = SequentialConfig(alpha=100.0, mip_gap=0.0)
    sets = {}
    for first in ("M1", "M2"):
        model, media = order_sensitivity_network(first)
        res = runner(model, media, cfg)
        assert res.order[0] == first
        sets[first] = _selected(res, model)
    assert sets["M1"] == {"direct", "shared"}
    assert sets["M2"] == {"shared"}


@pytest.mark.parametrize("runner", [run_lp_seq, run_mip_seq])
def test_lock_in_is_monotone(runner):
    model, media = search_instance()
    res = runner(model, media, SequentialConfig())
    hist = [set(h) for h in res.locked_history]
    assert all(a <= b for a, b in zip(hist, hist[1:]))
    assert hist[-1] == _selected(res, model)


def test_lp_seq_reuses_locked_pathway_at_reduced_cost(monkeypatch):
    import mfgapfill.baselines as baselines

    seen = []
    real = baselines.MediumProblem.solve

    def spy(self, state, alpha, warm_start=None, solver=None):
        seen.append((self.medium.id, state.eval_costs.copy()))
        return real(self, state, alpha, warm_start, solver)

    model, media = order_sensitivity_network("M2")
    prep = preprocess(model, media)
    monkeypatch.setattr(baselines.MediumProblem, "solve", spy)
    run_lp_seq(model, media, SequentialConfig(alpha=100.0), prep)
    assert [mid for mid, _ in seen[:2]] == ["M2", "M1"]
    per_medium = [c for _, c in seen[:2]]
    shared = model.reaction_index["shared"]
    assert per_medium[0][shared] == 3.0
    assert per_medium[1][shared] == 1.01


def test_single_medium_lp_seq_is_one_pfba_run():
    model, media = search_instance()
    cfg = SequentialConfig(alpha=10.0)
    res = run_lp_seq(model, media[:1], cfg)
    state = AvailabilityState.all_available(model)
    state.eval_costs = np.maximum(model.reaction_costs, 1.5)
    state.eval_costs[model.gene_mask] = 1.0
    sol = solve_pfba(model, media[0], state, 10.0)
    used = {model.reactions[i].id for i in np.flatnonzero(np.abs(sol.net_flux) > 1e-7)
            if not model.gene_mask[i]}
    assert _selected(res, model) == used


def test_single_medium_mip_seq_equals_milp():
    model, media = search_instance()
    cfg = SequentialConfig(alpha=10.0, mip_gap=0.0)
    res = run_mip_seq(model, media[:1], cfg)
    costs = np.maximum(model.reaction_costs, 1.5)
    costs[model.gene_mask] = 1.0
    milp = solve_gf_milp(model, media[0], costs, 10.0, gap=0.0)
    assert res.state.available.tolist() == milp.selected.tolist()


def test_zero_candidate_model_keeps_gene_set():
    model, media = toy_network()
    for runner in (run_lp_seq, run_mip_seq):
        res = runner(model, media, SequentialConfig())
        assert res.state.available.all()
        assert _selected(res, model) == set()


def test_truncation_flagged():
    model, media = search_instance()
    res = run_mip_seq(model, media, SequentialConfig(node_limit=1, mip_gap=0.0))
    assert res.truncated
    assert MipStatus.NODE_LIMIT in res.mip_status.values()


def test_lock_in_must_undercut_other_costs():
    with pytest.raises(ValueError):
        SequentialConfig(lock_in_cost=2.0, min_other_cost=1.5)
