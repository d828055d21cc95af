"""Multi-factorial gap-filling search.

Tabu memory, adaptive operator probabilities and simulated-annealing
acceptance over reaction availability, evaluated by per-medium cost-weighted
pFBA. The random stream is numpy's PCG64 seeded from ``SearchConfig.seed``;
within an iteration draws happen in a fixed order: operator roulette, then
reaction roulette, then the annealing uniform.
"""

from __future__ import annotations

import enum
import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .lp import LpSolver
from .model import AvailabilityState, MediumSpec, MetabolicModel
from .objectives import (GME_SYMMETRIC, Betas, Evaluation, TargetSet, compute_targets,
                         dominates, evaluate_solutions, reference_medium, used_cost)
from .pfba import (FLUX_USE_THRESHOLD, GROWTH_THRESHOLD, AlphaSchedule, MediumProblem,
                   PfbaEvaluator, calibrate_alpha, detect_runaway)

logger = logging.getLogger(__name__)


class Operator(enum.Enum):
    EXCLUDE_BY_COST = "exclude-by-cost"
    EXCLUDE_BY_FLUX = "exclude-by-flux"
    EXCLUDE_BY_COST_FLUX = "exclude-by-cost-flux"
    EXCLUDE_OVERS_UNDERS = "exclude-overs-vs-unders"
    EXCLUDE_RANDOM = "exclude-random"
    ADD_BY_COST = "add-by-cost"
    ADD_RANDOM = "add-random"
    MAKE_UNIT = "make-unit"
    EXCLUDE_RUNAWAY = "exclude-runaway"


FREE_OPERATORS = tuple(Operator)[:7]
ADD_OPERATORS = (Operator.ADD_BY_COST, Operator.ADD_RANDOM)


class Decision(enum.Enum):
    NEW_BEST = "NewBest"
    INCUMBENT = "Incumbent"
    PARETO_ONLY = "ParetoOnly"
    REJECT = "Reject"


class NoApplicableOperator(RuntimeError):
    pass


class AllMediaInfeasible(RuntimeError):
    pass


@dataclass
class SearchConfig:
    iterations: int = 5000
    betas: Betas = field(default_factory=Betas)
    regime: str = "cost+error"
    t_fail: int = 200
    t_worse: int = 25
    t_incumb: int = 500
    gamma1: float = 10.0
    gamma2: float = 3.0
    gamma3: float = 1.0
    sigma: float = 0.3
    update_period: int = 100
    seed: int = 0
    t0_fraction: float = 0.05
    cooling: float = 0.999
    similarity_tol: float = 1e-6
    overs_deadband: float = 1e-6
    checkpoint_every: int = 500
    threads: int = 1
    max_resample: int = 100
    gme_rule: str = GME_SYMMETRIC
    schedule: AlphaSchedule = field(default_factory=AlphaSchedule)

    def __post_init__(self):
        if min(self.t_fail, self.t_worse, self.t_incumb) < 0:
            raise ValueError("tabu tenures must be nonnegative")
        if min(self.gamma1, self.gamma2, self.gamma3) < 0:
            raise ValueError("adaptive rewards must be nonnegative")
        if not 0 <= self.sigma <= 1:
            raise ValueError("sigma must lie in [0, 1]")
        if self.update_period < 1:
            raise ValueError("update_period must be >= 1")

    def snapshot(self) -> dict:
        out = asdict(self)
        out["schedule"] = {"alpha_values": list(self.schedule.alpha_values),
                           "stabilization_tol": self.schedule.stabilization_tol}
        return out


class TabuList:
    def __init__(self, expiry: Optional[dict] = None):
        self.expiry = dict(expiry or {})

    def is_tabu(self, reaction: int, iteration: int) -> bool:
        return self.expiry.get(reaction, -1) > iteration

    def mask(self, n: int, iteration: int) -> np.ndarray:
        out = np.zeros(n, dtype=bool)
        for r, e in self.expiry.items():
            if e > iteration:
                out[r] = True
        return out

    def set(self, reaction: int, expiry: int) -> None:
        self.expiry[reaction] = max(expiry, self.expiry.get(reaction, -1))


@dataclass
class OperatorStats:
    probabilities: np.ndarray
    scores: np.ndarray
    usage: np.ndarray

    @classmethod
    def uniform(cls, k: int = len(FREE_OPERATORS)) -> "OperatorStats":
        return cls(np.full(k, 1.0 / k), np.zeros(k), np.zeros(k, dtype=int))


@dataclass
class SearchPoint:
    state: AvailabilityState
    solutions: dict
    evaluation: Evaluation
    used: np.ndarray
    runaway: bool
    exclusions: int

    @property
    def objective(self) -> float:
        return self.evaluation.objective


@dataclass
class ArchiveEntry:
    state: AvailabilityState
    evaluation: Evaluation
    iteration: int


class ParetoArchive:
    """Mutually non-dominated evaluations. Candidates whose component vector
    equals a member's are not inserted (the earlier one is kept)."""

    def __init__(self):
        self.entries: list = []

    def insert(self, state: AvailabilityState, evaluation: Evaluation, iteration: int) -> bool:
        comps = evaluation.components
        for e in self.entries:
            if e.evaluation.components == comps or dominates(e.evaluation, evaluation):
                return False
        self.entries = [e for e in self.entries if not dominates(evaluation, e.evaluation)]
        self.entries.append(ArchiveEntry(state.copy(), evaluation, iteration))
        return True

    def __len__(self) -> int:
        return len(self.entries)

    def is_nondominated(self) -> bool:
        return not any(dominates(a.evaluation, b.evaluation)
                       for a in self.entries for b in self.entries if a is not b)


@dataclass
class Move:
    operator: Operator
    reaction: int
    kind: str  # "exclude" | "add" | "unit"
    state: AvailabilityState


@dataclass
class Preprocessed:
    media: list
    dropped: list
    alphas: dict
    max_biomass: dict
    c0: float
    targets: TargetSet
    reference_solutions: dict


def roulette(weights: Sequence[float], u: float) -> int:
    """Index whose cumulative-weight interval contains ``u * total``."""
    cum = np.cumsum(np.asarray(weights, dtype=float))
    idx = int(np.searchsorted(cum, u * cum[-1], side="right"))
    return min(idx, len(cum) - 1)


# --- preprocessing and scoring ------------------------------------------------

def preprocess(model: MetabolicModel, media: Sequence[MediumSpec],
               schedule: AlphaSchedule = AlphaSchedule(), solver: Optional[LpSolver] = None) -> Preprocessed:
    """Calibrate alpha per medium with everything available at original costs,
    drop media that cannot grow, set targets (clamped to the achievable
    maximum) and the cost normaliser."""
    full = AvailabilityState.all_available(model)
    full.eval_costs = model.reaction_costs.copy()
    alphas, max_biomass, solutions, retained, dropped = {}, {}, {}, [], []
    for medium in media:
        problem = MediumProblem(model, medium)
        alpha, biomass = calibrate_alpha(model, medium, full, schedule, solver, problem)
        if biomass <= GROWTH_THRESHOLD:
            dropped.append(medium.id)
            logger.info("dropping medium %s: no biomass with all reactions available", medium.id)
            continue
        sol = problem.solve(full, alpha, None, solver)
        sol.runaway = detect_runaway(sol, medium, model)
        alphas[medium.id] = alpha
        max_biomass[medium.id] = sol.biomass
        solutions[medium.id] = sol
        retained.append(medium)
    if not retained:
        raise AllMediaInfeasible("no medium supports biomass production with all reactions available")
    ref = reference_medium(retained)
    targets = compute_targets(retained, max_biomass[ref.id], ref.id)
    for mid in targets.targets:
        targets.targets[mid] = min(targets.targets[mid], max_biomass[mid])
    c0, _ = used_cost(solutions, model)
    if c0 <= 0:
        c0 = 1.0
    return Preprocessed(retained, dropped, alphas, max_biomass, c0, targets, solutions)


class Scorer:
    """Evaluates availability states against preprocessed targets; memoised."""

    def __init__(self, model: MetabolicModel, prep: Preprocessed, betas: Betas,
                 threads: int = 1, solver: Optional[LpSolver] = None, gme_rule: str = GME_SYMMETRIC):
        self.model = model
        self.prep = prep
        self.betas = betas
        self.gme_rule = gme_rule
        self.evaluator = PfbaEvaluator(model, prep.media, prep.alphas, solver=solver, threads=threads)
        self.evaluator.set_reference(prep.reference_solutions)
        self.candidates = np.zeros(len(model.reactions), dtype=bool)
        self.candidates[model.candidate_indices()] = True
        self._cache: dict = {}

    def score(self, state: AvailabilityState) -> SearchPoint:
        key = state.key()
        hit = self._cache.get(key)
        if hit is not None:
            return replace(hit, state=state.copy())
        sols = self.evaluator.evaluate(state)
        ev, _ = evaluate_solutions(sols, self.model, self.prep.targets, self.betas,
                                   self.prep.c0, self.gme_rule)
        flux = np.max(np.abs(np.vstack([s.net_flux for s in sols.values()])), axis=0)
        used = flux > FLUX_USE_THRESHOLD
        used[self.model.biomass_index] = False
        point = SearchPoint(state.copy(), sols, ev, used, any(s.runaway for s in sols.values()),
                            int(np.sum(self.candidates & ~state.available)))
        self._cache[key] = point
        return point


def build_initial(model: MetabolicModel, scorer: Scorer, rng: np.random.Generator) -> AvailabilityState:
    """Greedy construction: candidates in increasing cost (random tie-break),
    each kept at unit evaluation cost iff total biomass does not drop and no
    runaway appears."""
    state = AvailabilityState.gene_only(model)
    costs = model.reaction_costs
    cands = np.array(model.candidate_indices(), dtype=int)
    if len(cands):
        cands = cands[rng.permutation(len(cands))]
        cands = cands[np.argsort(costs[cands], kind="stable")]
    point = scorer.score(state)
    total = sum(s.biomass for s in point.solutions.values())
    for i in cands:
        trial = state.copy()
        trial.available[i] = True
        trial.eval_costs[i] = 1.0
        p = scorer.score(trial)
        new_total = sum(s.biomass for s in p.solutions.values())
        if new_total >= total - 1e-9 and not p.runaway:
            state, total = trial, new_total
    return state


# --- operators ----------------------------------------------------------------

@dataclass
class OperatorContext:
    point: SearchPoint
    model: MetabolicModel
    targets: TargetSet
    tabu_mask: np.ndarray
    gene: np.ndarray
    candidates: np.ndarray
    deadband: float = 1e-6


def eligible_weights(op: Operator, ctx: OperatorContext) -> tuple:
    """(reaction indices, weights) an operator may pick from; empty = inapplicable."""
    point = ctx.point
    costs = ctx.model.reaction_costs
    state = point.state
    free = ctx.candidates & ~ctx.tabu_mask
    used = point.used & state.available & free
    flux = np.sum(np.abs(np.vstack([s.net_flux for s in point.solutions.values()])), axis=0)
    if op == Operator.EXCLUDE_BY_COST:
        w = costs
        mask = used
    elif op == Operator.EXCLUDE_BY_FLUX:
        w = flux
        mask = used
    elif op == Operator.EXCLUDE_BY_COST_FLUX:
        w = costs * flux
        mask = used
    elif op == Operator.EXCLUDE_OVERS_UNDERS:
        w = np.zeros(len(costs))
        for mid, sol in point.solutions.items():
            gap = sol.biomass - ctx.targets.targets[mid]
            sign = 1.0 if gap > ctx.deadband else (-1.0 if gap < -ctx.deadband else 0.0)
            if sign:
                w += sign * (np.abs(sol.net_flux) > FLUX_USE_THRESHOLD)
        mask = used & (w > 0)
    elif op == Operator.EXCLUDE_RANDOM:
        w = np.ones(len(costs))
        mask = used
    elif op == Operator.ADD_BY_COST:
        w = 1.0 / costs
        mask = free & ~state.available
    elif op == Operator.ADD_RANDOM:
        w = np.ones(len(costs))
        mask = free & ~state.available
    elif op == Operator.MAKE_UNIT:
        w = costs
        mask = used & (state.eval_costs > 1.0)
    elif op == Operator.EXCLUDE_RUNAWAY:
        mask = used if point.runaway else np.zeros(len(costs), dtype=bool)
        if mask.any():
            peak = np.max(np.abs(np.vstack([s.net_flux for s in point.solutions.values()])), axis=0)
            top = np.max(peak[mask])
            mask = mask & (peak >= top * (1 - 1e-9))
            top_cost = np.max(costs[mask])
            idx = int(np.flatnonzero(mask & (costs == top_cost))[0])
            return np.array([idx]), np.array([1.0])
        w = costs
    else:  # pragma: no cover
        raise ValueError(op)
    idx = np.flatnonzero(mask & (w > 0))
    return idx, w[idx]


def select_operator(stats: OperatorStats, ctx: OperatorContext, rng: np.random.Generator,
                    max_resample: int = 100) -> tuple:
    """Forced operators first (exclude-runaway, then make-unit), otherwise an
    adaptive roulette draw, redrawn while the drawn operator is inapplicable.
    Returns (operator, eligible indices, weights)."""
    for forced in (Operator.EXCLUDE_RUNAWAY, Operator.MAKE_UNIT):
        idx, w = eligible_weights(forced, ctx)
        if len(idx):
            return forced, idx, w
    options = {op: eligible_weights(op, ctx) for op in FREE_OPERATORS}
    if not any(len(v[0]) for v in options.values()):
        raise NoApplicableOperator("no operator has an eligible reaction")
    for _ in range(max_resample):
        op = FREE_OPERATORS[roulette(stats.probabilities, rng.random())]
        idx, w = options[op]
        if len(idx):
            return op, idx, w
    raise NoApplicableOperator(f"no applicable operator after {max_resample} draws")


def apply_operator(op: Operator, state: AvailabilityState, indices: np.ndarray, weights: np.ndarray,
                   rng: np.random.Generator) -> Move:
    i = int(indices[roulette(weights, rng.random())]) if len(indices) > 1 else int(indices[0])
    new = state.copy()
    if op in ADD_OPERATORS:
        new.available[i] = True
        kind = "add"
    elif op == Operator.MAKE_UNIT:
        new.eval_costs[i] = 1.0
        kind = "unit"
    else:
        new.available[i] = False
        kind = "exclude"
    return Move(op, i, kind, new)


# --- acceptance, tabu and adaptive update -----------------------------------------

def accept(new_obj: float, incumbent_obj: float, best_obj: float, temperature: float,
           new_exclusions: int, incumbent_exclusions: int, rng: np.random.Generator,
           similarity_tol: float = 1e-6) -> Decision:
    if new_obj < best_obj:
        return Decision.NEW_BEST
    delta = new_obj - incumbent_obj
    if delta < 0:
        return Decision.INCUMBENT
    if new_exclusions < incumbent_exclusions and abs(delta) <= similarity_tol * abs(incumbent_obj):
        return Decision.INCUMBENT
    if delta == 0:
        return Decision.INCUMBENT
    if temperature > 0 and rng.random() < math.exp(-delta / temperature):
        return Decision.INCUMBENT
    return Decision.REJECT


def update_tabu(tabu: TabuList, reaction: int, iteration: int, gme_increased: bool,
                worsened: bool, became_incumbent: bool, config: SearchConfig) -> Optional[int]:
    """Tenure by first matching outcome: GME up, objective worse, incumbent."""
    if gme_increased:
        tenure = config.t_fail
    elif worsened:
        tenure = config.t_worse
    elif became_incumbent:
        tenure = config.t_incumb
    else:
        return None
    tabu.set(reaction, iteration + tenure)
    return iteration + tenure


def update_adaptive(stats: OperatorStats, sigma: float) -> OperatorStats:
    p = stats.probabilities
    used = stats.usage > 0
    success = np.zeros_like(p)
    success[used] = stats.scores[used] / stats.usage[used]
    total = success[used].sum()
    if total > 0:
        target = p.copy()
        target[used] = success[used] / total
        mixed = sigma * target + (1 - sigma) * p
        p = mixed / mixed.sum()
    return OperatorStats(p, np.zeros_like(stats.scores), np.zeros_like(stats.usage))


# --- main loop ------------------------------------------------------------------

@dataclass
class RunResult:
    archive: ParetoArchive
    best: SearchPoint
    incumbent: SearchPoint
    log: list
    prep: Preprocessed
    stats: OperatorStats
    initial: SearchPoint


class MultiFactorialSearch:
    """Stateful driver; ``run`` executes the configured number of iterations."""

    def __init__(self, model: MetabolicModel, media: Sequence[MediumSpec], config: SearchConfig,
                 prep: Optional[Preprocessed] = None, solver: Optional[LpSolver] = None):
        self.model = model
        self.config = config
        self.prep = prep or preprocess(model, media, config.schedule, solver)
        self.scorer = Scorer(model, self.prep, config.betas, config.threads, solver, config.gme_rule)
        self.rng = np.random.Generator(np.random.PCG64(config.seed))
        self.gene = model.gene_mask
        self.tabu = TabuList()
        self.stats = OperatorStats.uniform()
        self.archive = ParetoArchive()
        self.log: list = []
        self.iteration = 0
        self.initial = None
        self.incumbent = None
        self.best = None
        self.temperature = 0.0

    def start(self) -> None:
        state = build_initial(self.model, self.scorer, self.rng)
        self.initial = self.incumbent = self.best = self.scorer.score(state)
        self.temperature = self.config.t0_fraction * abs(self.initial.objective)
        self.archive.insert(state, self.initial.evaluation, 0)

    def _context(self, point: SearchPoint) -> OperatorContext:
        n = len(self.model.reactions)
        return OperatorContext(point, self.model, self.prep.targets, self.tabu.mask(n, self.iteration),
                               self.gene, self.scorer.candidates, self.config.overs_deadband)

    def _accept(self, cand: SearchPoint) -> Decision:
        return accept(cand.objective, self.incumbent.objective, self.best.objective, self.temperature,
                      cand.exclusions, self.incumbent.exclusions, self.rng, self.config.similarity_tol)

    def step(self) -> dict:
        cfg = self.config
        self.iteration += 1
        it = self.iteration
        inc = self.incumbent
        record = {"iteration": it}
        try:
            op, idx, w = select_operator(self.stats, self._context(inc), self.rng, cfg.max_resample)
        except NoApplicableOperator:
            op = None
        if op is None:
            record.update(operator=None, reaction=None, decision="Skip")
        else:
            move = apply_operator(op, inc.state, idx, w, self.rng)
            cand = self.scorer.score(move.state)
            decision = self._accept(cand)
            if op == Operator.MAKE_UNIT and (decision == Decision.REJECT or (cand.runaway and not inc.runaway)):
                rolled = inc.state.copy()
                rolled.available[move.reaction] = False
                move = Move(op, move.reaction, "exclude", rolled)
                cand = self.scorer.score(rolled)
                decision = self._accept(cand)
            assert np.all(cand.state.available[self.gene])
            inserted = self.archive.insert(cand.state, cand.evaluation, it)
            accepted = decision in (Decision.NEW_BEST, Decision.INCUMBENT)
            if decision == Decision.NEW_BEST:
                self.best = cand
            if accepted:
                self.incumbent = cand
            elif inserted:
                decision = Decision.PARETO_ONLY
            if op in FREE_OPERATORS:
                k = FREE_OPERATORS.index(op)
                self.stats.usage[k] += 1
                if decision == Decision.NEW_BEST:
                    self.stats.scores[k] += cfg.gamma1
                elif accepted:
                    self.stats.scores[k] += cfg.gamma2
                if inserted:
                    self.stats.scores[k] += cfg.gamma3
            update_tabu(self.tabu, move.reaction, it, cand.evaluation.gme > inc.evaluation.gme,
                        cand.objective > inc.objective, accepted, cfg)
            ev = cand.evaluation
            record.update(operator=op.value, reaction=self.model.reactions[move.reaction].id,
                          move=move.kind, decision=decision.value, objective=ev.objective, cost=ev.cost,
                          gme=ev.gme, tau_prime=ev.tau_prime, rms=ev.rms)
        self.temperature *= cfg.cooling
        if it % cfg.update_period == 0:
            self.stats = update_adaptive(self.stats, cfg.sigma)
        record.update(best_objective=self.best.objective, incumbent_objective=self.incumbent.objective,
                      archive_size=len(self.archive), temperature=self.temperature)
        self.log.append(record)
        return record

    def run(self, iterations: Optional[int] = None, log_path=None, checkpoint_dir=None) -> RunResult:
        cfg = self.config
        if self.incumbent is None:
            self.start()
        end = cfg.iterations if iterations is None else iterations
        log_fh = open(log_path, "a") if log_path else None
        try:
            while self.iteration < end:
                record = self.step()
                if log_fh:
                    log_fh.write(json.dumps(record) + "\n")
                if checkpoint_dir and cfg.checkpoint_every and self.iteration % cfg.checkpoint_every == 0:
                    path = Path(checkpoint_dir) / f"checkpoint_{self.iteration:06d}.json"
                    save_checkpoint(self, path)
        finally:
            if log_fh:
                log_fh.close()
        return RunResult(self.archive, self.best, self.incumbent, self.log, self.prep, self.stats,
                         self.initial)


def run(model: MetabolicModel, media: Sequence[MediumSpec], config: SearchConfig,
        prep: Optional[Preprocessed] = None, **kwargs) -> RunResult:
    return MultiFactorialSearch(model, media, config, prep).run(**kwargs)


# --- checkpoints ----------------------------------------------------------------

def _rng_state_to_json(rng: np.random.Generator) -> dict:
    return rng.bit_generator.state


def save_checkpoint(search: "MultiFactorialSearch", path) -> None:
    model = search.model
    doc = {
        "iteration": search.iteration,
        "temperature": search.temperature,
        "rng": _rng_state_to_json(search.rng),
        "tabu": {model.reactions[r].id: e for r, e in sorted(search.tabu.expiry.items())},
        "stats": {"probabilities": search.stats.probabilities.tolist(),
                  "scores": search.stats.scores.tolist(), "usage": search.stats.usage.tolist()},
        "initial": search.initial.state.to_json(model),
        "incumbent": search.incumbent.state.to_json(model),
        "best": search.best.state.to_json(model),
        "archive": [{"state": e.state.to_json(model), "iteration": e.iteration}
                    for e in search.archive.entries],
        "config": search.config.snapshot(),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(doc))
    tmp.replace(path)


def load_checkpoint(model: MetabolicModel, media: Sequence[MediumSpec], config: SearchConfig, path,
                    prep: Optional[Preprocessed] = None, solver: Optional[LpSolver] = None) -> "MultiFactorialSearch":
    doc = json.loads(Path(path).read_text())
    search = MultiFactorialSearch(model, media, config, prep, solver)
    index = model.reaction_index
    score = search.scorer.score
    search.iteration = int(doc["iteration"])
    search.temperature = float(doc["temperature"])
    search.rng.bit_generator.state = doc["rng"]
    search.tabu = TabuList({index[rid]: int(e) for rid, e in doc["tabu"].items()})
    st = doc["stats"]
    search.stats = OperatorStats(np.array(st["probabilities"]), np.array(st["scores"]),
                                 np.array(st["usage"], dtype=int))
    search.initial = score(AvailabilityState.from_json(model, doc["initial"]))
    search.incumbent = score(AvailabilityState.from_json(model, doc["incumbent"]))
    search.best = score(AvailabilityState.from_json(model, doc["best"]))
    for entry in doc["archive"]:
        state = AvailabilityState.from_json(model, entry["state"])
        search.archive.entries.append(ArchiveEntry(state, score(state).evaluation, int(entry["iteration"])))
    return search
