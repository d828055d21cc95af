"""Sequential gap-filling baselines: per-medium cost-weighted pFBA (LP-Seq) and
per-medium MILP gap-filling (MIP-Seq) solved by a small branch-and-bound."""

from __future__ import annotations

import enum
import heapq
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .lp import LinearProgram, LpSolver, LpStatus, solve as lp_solve
from .model import AvailabilityState, MediumSpec, MetabolicModel, expand
from .objectives import GME_SYMMETRIC, Betas, Evaluation, evaluate_solutions
from .pfba import FLUX_USE_THRESHOLD, MediumProblem, PfbaEvaluator, SolveFailed
from .search import Preprocessed, preprocess

logger = logging.getLogger(__name__)

INTEGRALITY_TOL = 1e-6


class MipStatus(enum.Enum):
    OPTIMAL = "Optimal"
    TIME_LIMIT = "TimeLimit"
    NODE_LIMIT = "NodeLimit"


@dataclass
class SequentialConfig:
    lock_in_cost: float = 1.01
    min_other_cost: float = 1.5
    time_limit: float = 3600.0
    mip_gap: float = 0.01
    node_limit: int = 100_000
    alpha: Optional[float] = None  # None: use the preprocessed per-medium alpha
    betas: Betas = field(default_factory=Betas)
    gme_rule: str = GME_SYMMETRIC

    def __post_init__(self):
        if not self.lock_in_cost < self.min_other_cost:
            raise ValueError("lock_in_cost must be below min_other_cost")


@dataclass
class MilpResult:
    selected: np.ndarray  # bool per reaction; gene-indicated reactions always True
    fluxes: np.ndarray  # net flux per reaction
    biomass: float
    objective: float
    bound: float
    gap: float
    status: MipStatus
    nodes: int
    incumbent_history: list = field(default_factory=list)
    node_bounds: list = field(default_factory=list)


@dataclass
class SequentialResult:
    state: AvailabilityState
    evaluation: Evaluation
    order: list
    selected_per_medium: dict
    locked_history: list
    truncated: bool = False
    mip_status: dict = field(default_factory=dict)
    solutions: dict = field(default_factory=dict)


def medium_order(media: Sequence[MediumSpec]) -> list:
    """Decreasing growth score, ties by id."""
    return sorted(media, key=lambda m: (-m.growth_score, m.id))


def _baseline_costs(model: MetabolicModel, config: SequentialConfig) -> np.ndarray:
    costs = model.reaction_costs.copy()
    gene = model.gene_mask
    costs[gene] = 1.0
    costs[~gene] = np.maximum(costs[~gene], config.min_other_cost)
    return costs


def _relative_gap(incumbent: float, bound: float) -> float:
    if not math.isfinite(incumbent):
        return math.inf
    return max(0.0, incumbent - bound) / max(abs(incumbent), 1e-10)


def solve_gf_milp(model: MetabolicModel, medium: MediumSpec, costs: np.ndarray, alpha: float,
                  gap: float = 0.01, time_limit: float = math.inf, node_limit: int = 100_000,
                  solver: Optional[LpSolver] = None) -> MilpResult:
    """min sum c_i y_i - alpha x_0 with x_i <= y_i U_i for candidate reactions.

    Best-bound branch-and-bound on the LP relaxation, branching on the most
    fractional y. Child nodes warm-start from the parent basis.
    """
    net = expand(model)
    gene = model.gene_mask
    cand = [i for i in model.candidate_indices()]
    ncol = net.num_columns
    ny = len(cand)
    ypos = {r: ncol + k for k, r in enumerate(cand)}
    obj = np.zeros(ncol + ny)
    obj[net.biomass_column] = -alpha
    for k, r in enumerate(cand):
        obj[ncol + k] = costs[r]
    lower = np.zeros(ncol + ny)
    upper = np.concatenate([net.upper, np.ones(ny)])
    row_lo, row_hi = medium.row_bounds(model)
    link_cols = [j for j in range(ncol) if not gene[net.parent[j]]]
    A = np.zeros((len(row_lo) + len(link_cols), ncol + ny))
    A[: len(row_lo), :ncol] = net.matrix
    for r, j in enumerate(link_cols):
        A[len(row_lo) + r, j] = 1.0
        A[len(row_lo) + r, ypos[net.parent[j]]] = -net.upper[j]
    row_lo = np.concatenate([row_lo, np.full(len(link_cols), -np.inf)])
    row_hi = np.concatenate([row_hi, np.zeros(len(link_cols))])
    base = LinearProgram(obj, lower, upper, A, row_lo, row_hi)

    start = time.monotonic()
    best_obj, best_x = math.inf, None
    history, node_bounds = [], []
    counter = 0
    heap = [(-math.inf, counter, lower.copy(), upper.copy(), None)]
    nodes = 0
    status = MipStatus.OPTIMAL
    global_bound = -math.inf

    def consider(x: np.ndarray, value: float) -> None:
        nonlocal best_obj, best_x
        if value < best_obj - 1e-12:
            best_obj, best_x = value, x.copy()
            history.append(value)

    while heap:
        global_bound = heap[0][0]
        if _relative_gap(best_obj, global_bound) <= gap and best_x is not None:
            break
        if nodes >= node_limit:
            status = MipStatus.NODE_LIMIT
            break
        if time.monotonic() - start > time_limit:
            status = MipStatus.TIME_LIMIT
            break
        parent_bound, _, lo, hi, basis = heapq.heappop(heap)
        if parent_bound >= best_obj - 1e-9:
            continue
        nodes += 1
        sol = lp_solve(base.with_bounds(lower=lo, upper=hi), basis, solver)
        if sol.status == LpStatus.INFEASIBLE:
            continue
        if sol.status != LpStatus.OPTIMAL:
            raise SolveFailed(f"MILP node LP status {sol.status.value}")
        node_bounds.append(sol.objective_value)
        if sol.objective_value >= best_obj - 1e-9:
            continue
        yv = sol.primal[ncol:]
        frac = np.abs(yv - np.round(yv))
        if ny == 0 or frac.max() <= INTEGRALITY_TOL:
            consider(sol.primal, sol.objective_value)
            continue
        # rounding heuristic: open every partially used reaction
        rlo, rhi = lo.copy(), hi.copy()
        ceil = np.where(yv > INTEGRALITY_TOL, 1.0, 0.0)
        rlo[ncol:] = np.maximum(lo[ncol:], ceil)
        rhi[ncol:] = np.minimum(hi[ncol:], ceil)
        if np.all(rlo <= rhi):
            heur = lp_solve(base.with_bounds(lower=rlo, upper=rhi), sol.basis, solver)
            if heur.status == LpStatus.OPTIMAL:
                consider(heur.primal, heur.objective_value)
        k = int(np.argmin(np.abs(yv - 0.5) + (frac <= INTEGRALITY_TOL) * 10))
        for val in (1.0, 0.0):
            clo, chi = lo.copy(), hi.copy()
            clo[ncol + k] = chi[ncol + k] = val
            counter += 1
            heapq.heappush(heap, (sol.objective_value, counter, clo, chi, sol.basis))
    else:
        global_bound = best_obj

    if best_x is None:  # only reachable when truncated at the root
        best_x = np.zeros(ncol + ny)
        best_obj = 0.0
    if heap and status == MipStatus.OPTIMAL:
        global_bound = min(heap[0][0], best_obj)
    selected = gene.copy()
    for k, r in enumerate(cand):
        selected[r] = best_x[ncol + k] > 0.5
    fluxes = net.aggregate(best_x[:ncol], len(model.reactions))
    return MilpResult(selected, fluxes, float(best_x[net.biomass_column]), float(best_obj),
                      float(global_bound), _relative_gap(best_obj, global_bound), status, nodes,
                      history, node_bounds)


def _final_evaluation(model, prep: Preprocessed, selected: np.ndarray, config: SequentialConfig,
                      solver) -> tuple:
    state = AvailabilityState.all_available(model)
    state.available = selected.copy()
    state.eval_costs[selected] = 1.0
    evaluator = PfbaEvaluator(model, prep.media, prep.alphas, solver=solver)
    evaluator.set_reference(prep.reference_solutions)
    sols = evaluator.evaluate(state)
    ev, _ = evaluate_solutions(sols, model, prep.targets, config.betas, prep.c0, config.gme_rule)
    return state, ev, sols


def _run_sequential(model, media, config, step, prep, solver) -> SequentialResult:
    prep = prep or preprocess(model, media, solver=solver)
    costs = _baseline_costs(model, config)
    gene = model.gene_mask
    selected = gene.copy()
    order = medium_order(prep.media)
    locked_history, per_medium, statuses = [], {}, {}
    truncated = False
    for medium in order:
        alpha = config.alpha if config.alpha is not None else prep.alphas[medium.id]
        chosen, status = step(medium, costs, alpha)
        statuses[medium.id] = status
        if status is not None and status != MipStatus.OPTIMAL:
            truncated = True
            logger.warning("medium %s: MILP stopped with %s", medium.id, status.value)
        newly = chosen & ~selected & ~gene
        costs[newly] = config.lock_in_cost
        selected |= chosen
        per_medium[medium.id] = sorted(model.reactions[i].id for i in np.flatnonzero(chosen & ~gene))
        locked_history.append(sorted(model.reactions[i].id for i in np.flatnonzero(selected & ~gene)))
    state, ev, sols = _final_evaluation(model, prep, selected, config, solver)
    return SequentialResult(state, ev, [m.id for m in order], per_medium, locked_history, truncated,
                            statuses, sols)


def run_lp_seq(model: MetabolicModel, media: Sequence[MediumSpec],
               config: SequentialConfig = SequentialConfig(), prep: Optional[Preprocessed] = None,
               solver: Optional[LpSolver] = None) -> SequentialResult:
    def step(medium, costs, alpha):
        state = AvailabilityState.all_available(model)
        state.eval_costs = costs.copy()
        sol = MediumProblem(model, medium).solve(state, alpha, None, solver)
        return np.abs(sol.net_flux) > FLUX_USE_THRESHOLD, None

    return _run_sequential(model, media, config, step, prep, solver)


def run_mip_seq(model: MetabolicModel, media: Sequence[MediumSpec],
                config: SequentialConfig = SequentialConfig(), prep: Optional[Preprocessed] = None,
                solver: Optional[LpSolver] = None) -> SequentialResult:
    def step(medium, costs, alpha):
        res = solve_gf_milp(model, medium, costs, alpha, config.mip_gap, config.time_limit,
                            config.node_limit, solver)
        return res.selected.copy(), res.status

    return _run_sequential(model, media, config, step, prep, solver)
