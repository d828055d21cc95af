import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mfgapfill.fixtures import runaway_network, search_instance, toy_network
from mfgapfill.model import AvailabilityState, Metabolite, MetabolicModel, MediumSpec, Reaction
from mfgapfill.objectives import Betas, Evaluation, dominates
from mfgapfill.pfba import FluxSolution
from mfgapfill.lp import LpStatus
from mfgapfill.search import (FREE_OPERATORS, Decision, MultiFactorialSearch, NoApplicableOperator,
                              Operator, OperatorContext, OperatorStats, ParetoArchive, Scorer,
                              SearchConfig, SearchPoint, TabuList, accept, apply_operator, build_initial,
                              eligible_weights, load_checkpoint, preprocess, roulette, save_checkpoint,
                              select_operator, update_adaptive, update_tabu)


@pytest.fixture(scope="module")
def instance():
    model, media = search_instance()
    return model, media, preprocess(model, media)


# --- roulette and adaptive probabilities --------------------------------------------

def test_roulette_two_weights():
    assert roulette([1.0, 9.0], 0.5) == 1
    assert roulette([1.0, 9.0], 0.05) == 0
    assert roulette([1.0, 9.0], 0.1) == 1  # boundary belongs to the next interval


def test_roulette_frequencies():
    rng = np.random.default_rng(0)
    w = np.array([1.0, 3.0, 6.0])
    draws = np.bincount([roulette(w, rng.random()) for _ in range(20000)], minlength=3) / 20000
    np.testing.assert_allclose(draws, w / w.sum(), atol=0.015)


def test_adaptive_update_hand_example():
    stats = OperatorStats(np.array([0.5, 0.5]), np.array([10.0, 0.0]), np.array([5, 0]))
    new = update_adaptive(stats, 0.3)
    np.testing.assert_allclose(new.probabilities, [0.65 / 1.15, 0.5 / 1.15])
    np.testing.assert_allclose(new.probabilities, [0.565, 0.435], atol=5e-4)
    assert not new.scores.any() and not new.usage.any()


def test_adaptive_update_degenerate_cases():
    p = np.array([0.2, 0.3, 0.5])
    stats = OperatorStats(p.copy(), np.array([3.0, 1.0, 0.0]), np.array([1, 1, 1]))
    np.testing.assert_allclose(update_adaptive(stats, 0.0).probabilities, p)
    zero = OperatorStats(p.copy(), np.zeros(3), np.array([2, 2, 2]))
    np.testing.assert_allclose(update_adaptive(zero, 0.3).probabilities, p)
    single = OperatorStats(np.array([1.0]), np.array([4.0]), np.array([2]))
    assert update_adaptive(single, 0.3).probabilities[0] == 1.0


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0.01, 1), min_size=7, max_size=7),
       st.lists(st.floats(0, 50), min_size=7, max_size=7),
       st.lists(st.integers(0, 20), min_size=7, max_size=7), st.floats(0, 1))
def test_adaptive_update_keeps_a_distribution(p, s, n, sigma):
    p = np.array(p) / np.sum(p)
    new = update_adaptive(OperatorStats(p, np.array(s), np.array(n)), sigma)
    assert np.all(new.probabilities >= 0)
    assert new.probabilities.sum() == pytest.approx(1.0)


# --- acceptance and tabu ------------------------------------------------------------

def test_accept_rules():
    rng = np.random.default_rng(0)
    assert accept(0.5, 2.0, 1.0, 1.0, 0, 0, rng) == Decision.NEW_BEST
    assert accept(1.5, 2.0, 1.0, 0.0, 0, 0, rng) == Decision.INCUMBENT
    assert accept(2.0, 2.0, 1.0, 0.0, 3, 3, rng) == Decision.INCUMBENT  # exp(0) = 1
    assert accept(3.0, 2.0, 1.0, 0.0, 0, 0, rng) == Decision.REJECT
    # fewer exclusions with a practically equal objective
    assert accept(2.0 + 1e-7, 2.0, 1.0, 0.0, 2, 3, rng) == Decision.INCUMBENT
    assert accept(2.0 + 1e-7, 2.0, 1.0, 0.0, 3, 3, rng) == Decision.REJECT


def test_metropolis_half_probability():
    rng = np.random.default_rng(123)
    T = 0.7
    hits = sum(accept(2.0 + T * math.log(2), 2.0, 1.0, T, 0, 0, rng) == Decision.INCUMBENT
               for _ in range(10_000))
    assert abs(hits / 10_000 - 0.5) <= 0.02


def test_tabu_tenures():
    cfg = SearchConfig()
    tabu = TabuList()
    assert update_tabu(tabu, 1, 10, True, True, False, cfg) == 210
    assert update_tabu(tabu, 2, 10, False, True, False, cfg) == 35
    assert update_tabu(tabu, 3, 10, False, False, True, cfg) == 510
    assert update_tabu(tabu, 4, 10, False, False, False, cfg) is None
    assert tabu.is_tabu(1, 209) and not tabu.is_tabu(1, 210)
    assert not tabu.is_tabu(4, 11)
    np.testing.assert_array_equal(tabu.mask(5, 100), [False, True, False, True, False])


# --- operators ----------------------------------------------------------------------

def _chain_model(costs):
    """Candidates r0.. each converting S to P; biomass drains P."""
    mets = [Metabolite("S", "S", 1), Metabolite("P", "P", 1)]
    rxns = [Reaction("biomass", {"P": -1}, False, True, 1.0, 100.0)]
    rxns += [Reaction(f"r{k}", {"S": -1, "P": 1}, False, False, float(c), 10.0) for k, c in enumerate(costs)]
    return MetabolicModel(mets, rxns, "biomass")


def _point(model, flux, available=None, runaway=False, eval_costs=None):
    n = len(model.reactions)
    state = AvailabilityState.all_available(model)
    if available is not None:
        state.available = np.asarray(available, bool)
    state.eval_costs[:] = 1.0 if eval_costs is None else eval_costs
    flux = np.asarray(flux, float)
    sol = FluxSolution("m", flux, float(flux[0]), 10.0, LpStatus.OPTIMAL, tuple(r.id for r in model.reactions))
    used = np.abs(flux) > 1e-7
    used[0] = False
    ev = Evaluation(0, 0, 0, 0, 0, 0, 0, 0)
    return SearchPoint(state, {"m": sol}, ev, used, runaway, int(np.sum(~state.available[1:])))


def _ctx(model, point, tabu=None, targets=None):
    from mfgapfill.objectives import TargetSet
    from mfgapfill.model import GrowthClass

    n = len(model.reactions)
    cands = np.zeros(n, bool)
    cands[model.candidate_indices()] = True
    targets = targets or TargetSet("m", 1.0, {"m": 1.0}, {"m": GrowthClass.GROWTH})
    return OperatorContext(point, model, targets, np.zeros(n, bool) if tabu is None else tabu,
                           model.gene_mask, cands)


def test_exclude_runaway_picks_costliest_max_flux_reaction():
    costs = [1, 2, 3, 5, 4, 6, 7, 50]  # r3 cost 5, r7 cost 50
    model = _chain_model(costs)
    flux = [9, 1, 1, 1, 4, 1, 1, 1, 4]  # r3 and r7 share the maximum flux
    point = _point(model, flux, runaway=True)
    idx, w = eligible_weights(Operator.EXCLUDE_RUNAWAY, _ctx(model, point))
    assert [model.reactions[i].id for i in idx] == ["r7"]


def test_forced_operator_priority():
    model = _chain_model([2.0, 3.0])
    rng = np.random.default_rng(0)
    stats = OperatorStats.uniform()
    runaway = _point(model, [1, 1, 1], runaway=True, eval_costs=[1, 2, 3])
    assert select_operator(stats, _ctx(model, runaway), rng)[0] == Operator.EXCLUDE_RUNAWAY
    unit = _point(model, [1, 1, 0], eval_costs=[1, 2, 3])
    op, idx, _ = select_operator(stats, _ctx(model, unit), rng)
    assert op == Operator.MAKE_UNIT and list(idx) == [1]


def test_add_by_cost_singleton():
    model = _chain_model([2.0, 3.0, 4.0])
    point = _point(model, [1, 1, 0, 0], available=[1, 1, 1, 0])
    idx, w = eligible_weights(Operator.ADD_BY_COST, _ctx(model, point))
    assert list(idx) == [3]
    move = apply_operator(Operator.ADD_BY_COST, point.state, idx, w, np.random.default_rng(0))
    assert move.state.available[3] and move.kind == "add"


def test_overs_vs_unders_weights():
    from mfgapfill.objectives import TargetSet
    from mfgapfill.model import GrowthClass

    model = _chain_model([2.0, 3.0])
    sols = {}
    for mid, flux in (("over1", [2, 2, 0]), ("over2", [2, 1, 1]), ("under", [0.5, 0, 0.5])):
        f = np.array(flux, float)
        sols[mid] = FluxSolution(mid, f, f[0], 10.0, LpStatus.OPTIMAL)
    point = _point(model, [2, 2, 1])
    point.solutions = sols
    targets = TargetSet("over1", 1.0, {"over1": 1.0, "over2": 1.0, "under": 1.0},
                        {k: GrowthClass.GROWTH for k in sols})
    idx, w = eligible_weights(Operator.EXCLUDE_OVERS_UNDERS, _ctx(model, point, targets=targets))
    # r0: two overs, no unders -> 2; r1: one over, one under -> 0 (ineligible)
    assert list(idx) == [1] and list(w) == [2.0]


def test_seeded_operator_draw_replays_rng_stream():
    model = _chain_model([2.0, 3.0, 4.0])
    point = _point(model, [1, 1, 1, 0], available=[1, 1, 1, 0])
    ctx = _ctx(model, point)
    applicable = {op for op in FREE_OPERATORS if len(eligible_weights(op, ctx)[0])}
    for seed in range(20):
        op, _, _ = select_operator(OperatorStats.uniform(), ctx, np.random.default_rng(seed))
        replay = np.random.default_rng(seed)
        while True:
            expected = FREE_OPERATORS[int(replay.random() * len(FREE_OPERATORS))]
            if expected in applicable:
                break
        assert op == expected


def test_no_applicable_operator():
    model = _chain_model([2.0])
    point = _point(model, [0, 0])
    tabu = np.array([False, True])
    with pytest.raises(NoApplicableOperator):
        select_operator(OperatorStats.uniform(), _ctx(model, point, tabu=tabu), np.random.default_rng(0))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6))
def test_tabu_and_gene_reactions_never_eligible(seed):
    rng = np.random.default_rng(seed)
    model = _chain_model(rng.choice([1.0, 2.0, 5.0], 6))
    flux = np.concatenate([[3.0], rng.random(6) * (rng.random(6) < 0.6)])
    avail = np.concatenate([[True], rng.random(6) < 0.7])
    flux[~avail] = 0.0
    point = _point(model, flux, available=avail, runaway=bool(rng.random() < 0.3),
                   eval_costs=rng.choice([1.0, 2.0], 7))
    tabu = np.concatenate([[False], rng.random(6) < 0.4])
    ctx = _ctx(model, point, tabu=tabu)
    for op in Operator:
        idx, w = eligible_weights(op, ctx)
        assert not np.any(tabu[idx])
        assert not np.any(model.gene_mask[idx])
        assert np.all(w > 0)


# --- archive ------------------------------------------------------------------------

def _ev(*comps):
    c, g, t, r = comps
    return Evaluation(c, c, g, 1 - t, t, r, 0.0, c + 1000 * g + 10 * t + r)


def test_archive_rejects_duplicates_and_dominated():
    arch = ParetoArchive()
    s = AvailabilityState(np.ones(2, bool), np.ones(2))
    assert arch.insert(s, _ev(1, 0, 0.5, 1), 0)
    assert not arch.insert(s, _ev(1, 0, 0.5, 1), 1)
    assert not arch.insert(s, _ev(2, 0, 0.5, 1), 2)
    assert arch.insert(s, _ev(0.5, 1, 0.5, 1), 3)
    assert arch.insert(s, _ev(0.5, 0, 0.5, 1), 4)  # evicts both earlier entries
    assert len(arch) == 1


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 2), st.integers(0, 3), st.integers(0, 4)),
                max_size=40))
def test_archive_stays_nondominated_and_complete(points):
    arch = ParetoArchive()
    s = AvailabilityState(np.ones(1, bool), np.ones(1))
    for k, p in enumerate(points):
        arch.insert(s, _ev(*map(float, p)), k)
        assert arch.is_nondominated()
    comps = {tuple(map(float, p)) for p in points}
    front = {p for p in comps if not any(dominates(q, p) for q in comps)}
    assert {e.evaluation.components for e in arch.entries} == {
        (c, g, t, r) for c, g, t, r in front}


# --- initial solution ---------------------------------------------------------------

def test_initial_solution_drops_runaway_candidate():
    model, media = runaway_network()
    prep = preprocess(model, media)
    scorer = Scorer(model, prep, Betas())
    state = build_initial(model, scorer, np.random.default_rng(0))
    assert not state.available[model.reaction_index["duplicate"]]


def test_initial_solution_without_candidates_is_everything():
    model, media = toy_network()
    prep = preprocess(model, media)
    assert prep.dropped == ["empty"]
    state = build_initial(model, Scorer(model, prep, Betas()), np.random.default_rng(0))
    assert state.available.all()


def test_initial_solution_keeps_growth_enabling_candidates(instance):
    model, media, prep = instance
    state = build_initial(model, Scorer(model, prep, Betas()), np.random.default_rng(0))
    # cs3 only grows through candidates
    assert state.available[model.reaction_index["c3"]] or (
        state.available[model.reaction_index["c1"]] and state.available[model.reaction_index["c2"]])


# --- full runs ----------------------------------------------------------------------

def test_zero_iterations_archive_holds_initial(instance):
    model, media, prep = instance
    res = MultiFactorialSearch(model, media, SearchConfig(iterations=0), prep).run()
    assert len(res.archive) == 1
    assert res.archive.entries[0].evaluation == res.initial.evaluation
    assert res.log == []


def test_run_invariants(instance):
    model, media, prep = instance
    cfg = SearchConfig(iterations=800, seed=5, update_period=50)
    search = MultiFactorialSearch(model, media, cfg, prep)
    search.start()
    gene = model.gene_mask
    last_best = search.best.objective
    for _ in range(cfg.iterations):
        tabu_before = search.tabu.mask(len(model.reactions), search.iteration + 1)
        rec = search.step()
        if rec["reaction"] is not None:
            assert not tabu_before[model.reaction_index[rec["reaction"]]]
        assert np.all(search.incumbent.state.available[gene])
        assert search.best.objective <= last_best
        last_best = search.best.objective
        assert search.archive.is_nondominated()
        p = search.stats.probabilities
        assert np.all(p >= 0) and p.sum() == pytest.approx(1.0)
        assert rec["best_objective"] == search.best.objective
    assert search.best.objective <= search.initial.objective


def test_same_seed_same_log(instance):
    model, media, prep = instance
    cfg = SearchConfig(iterations=300, seed=11)
    a = MultiFactorialSearch(model, media, cfg, prep).run()
    b = MultiFactorialSearch(model, media, cfg, prep).run()
    assert json.dumps(a.log) == json.dumps(b.log)
    other = MultiFactorialSearch(model, media, SearchConfig(iterations=300, seed=12), prep).run()
    assert json.dumps(other.log) != json.dumps(a.log)


def test_thread_count_does_not_change_log(instance):
    model, media, prep = instance
    a = MultiFactorialSearch(model, media, SearchConfig(iterations=300, seed=3, threads=1), prep).run()
    b = MultiFactorialSearch(model, media, SearchConfig(iterations=300, seed=3, threads=4), prep).run()
    assert json.dumps(a.log) == json.dumps(b.log)


def test_checkpoint_resume_reproduces_uninterrupted_run(instance, tmp_path):
    model, media, prep = instance
    cfg = SearchConfig(iterations=1000, seed=4)
    full = MultiFactorialSearch(model, media, cfg, prep).run()
    first = MultiFactorialSearch(model, media, cfg, prep)
    first.run(iterations=500)
    save_checkpoint(first, tmp_path / "ck.json")
    resumed = load_checkpoint(model, media, cfg, tmp_path / "ck.json", prep)
    rest = resumed.run()
    assert json.dumps(full.log[500:]) == json.dumps(rest.log)
    assert [e.evaluation for e in full.archive.entries] == [e.evaluation for e in rest.archive.entries]


def test_make_unit_rollback_excludes_reaction(instance):
    model, media, prep = instance
    search = MultiFactorialSearch(model, media, SearchConfig(seed=0), prep)
    search.start()
    a1 = model.reaction_index["a1"]
    state = search.incumbent.state.copy()
    state.eval_costs[a1] = model.reactions[a1].cost
    search.incumbent = search.best = search.scorer.score(state)
    assert search.incumbent.used[a1]
    real = search._accept
    calls = []

    def first_rejects(cand):
        calls.append(cand)
        return Decision.REJECT if len(calls) == 1 else real(cand)

    search._accept = first_rejects
    rec = search.step()
    assert rec["operator"] == "make-unit" and rec["reaction"] == "a1"
    assert rec["move"] == "exclude"
    assert not calls[1].state.available[a1]
    assert calls[1].state.eval_costs[a1] == model.reactions[a1].cost


def test_pareto_front_matches_enumeration_with_exploratory_settings(instance):
    import itertools

    model, media, prep = instance
    scorer = Scorer(model, prep, Betas())
    cands = model.candidate_indices()
    comps = set()
    for bits in itertools.product([False, True], repeat=len(cands)):
        state = AvailabilityState.all_available(model)
        state.available[cands] = bits
        state.eval_costs[:] = 1.0
        comps.add(scorer.score(state).evaluation.components)
    front = {c for c in comps if not any(dominates(d, c) for d in comps)}
    cfg = SearchConfig(iterations=20000, seed=0, t_fail=2, t_worse=1, t_incumb=3, t0_fraction=0.5,
                       cooling=0.9999)
    res = MultiFactorialSearch(model, media, cfg, prep).run()
    assert {e.evaluation.components for e in res.archive.entries} == front
