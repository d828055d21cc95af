"""Cost-weighted parsimonious FBA per medium, alpha calibration, runaway detection."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .lp import Basis, LinearProgram, LpSolver, LpStatus, solve as lp_solve
from .model import (DEFAULT_DEMAND_CAP, AvailabilityState, MediumSpec, MetabolicModel,
                    expand)

logger = logging.getLogger(__name__)

GROWTH_THRESHOLD = 1e-6
FLUX_USE_THRESHOLD = 1e-7
RUNAWAY_EPS = 1e-3


class SolveFailed(RuntimeError):
    pass


class ModelDataError(RuntimeError):
    pass


@dataclass(frozen=True)
class AlphaSchedule:
    alpha_values: tuple = tuple(10.0 ** k for k in range(7))
    stabilization_tol: float = 1e-4

    def __post_init__(self):
        vals = tuple(float(a) for a in self.alpha_values)
        if not vals:
            raise ValueError("alpha ladder must be nonempty")
        if vals[0] < 1 or any(b <= a for a, b in zip(vals, vals[1:])):
            raise ValueError("alpha ladder must be strictly increasing and >= 1")
        object.__setattr__(self, "alpha_values", vals)


@dataclass
class FluxSolution:
    medium_id: str
    net_flux: np.ndarray  # per reaction, model order
    biomass: float
    alpha_used: float
    status: LpStatus
    reaction_ids: tuple = ()
    runaway: bool = False
    basis: Optional[Basis] = field(default=None, repr=False, compare=False)

    @property
    def fluxes(self) -> dict:
        return dict(zip(self.reaction_ids, self.net_flux.tolist()))

    @property
    def grows(self) -> bool:
        return self.biomass > GROWTH_THRESHOLD


class MediumProblem:
    """LP template for one medium; per-state solves only change bounds and costs."""

    def __init__(self, model: MetabolicModel, medium: MediumSpec,
                 demand_cap: float = DEFAULT_DEMAND_CAP):
        self.model = model
        self.medium = medium
        self.network = expand(model)
        self.row_lower, self.row_upper = medium.row_bounds(model, demand_cap)
        self.reaction_ids = tuple(r.id for r in model.reactions)

    def build(self, state: AvailabilityState, alpha: float) -> LinearProgram:
        net = self.network
        parent = net.parent
        upper = net.upper * state.available[parent]
        upper[net.biomass_column] = net.upper[net.biomass_column]
        cost = state.eval_costs[parent].astype(float)
        cost[net.biomass_column] = -alpha
        return LinearProgram(cost, np.zeros(net.num_columns), upper, net.matrix,
                             self.row_lower, self.row_upper)

    def solve(self, state: AvailabilityState, alpha: float, warm_start: Optional[Basis] = None,
              solver: Optional[LpSolver] = None) -> FluxSolution:
        lp = self.build(state, alpha)
        sol = lp_solve(lp, warm_start, solver)
        if sol.status == LpStatus.INFEASIBLE:
            raise ModelDataError(
                f"medium {self.medium.id}: pFBA infeasible; zero flux should always be feasible "
                "(check for negative supplies or demands)")
        if sol.status != LpStatus.OPTIMAL:
            raise SolveFailed(f"medium {self.medium.id}: LP status {sol.status.value}")
        net = self.network.aggregate(sol.primal, len(self.model.reactions))
        biomass = float(sol.primal[self.network.biomass_column])
        return FluxSolution(self.medium.id, net, biomass, float(alpha), sol.status,
                            self.reaction_ids, basis=sol.basis)


def solve_pfba(model: MetabolicModel, medium: MediumSpec, state: AvailabilityState,
               alpha: float, solver: Optional[LpSolver] = None,
               warm_start: Optional[Basis] = None) -> FluxSolution:
    if alpha < 1:
        raise ValueError("alpha must be >= 1")
    sol = MediumProblem(model, medium).solve(state, alpha, warm_start, solver)
    sol.runaway = detect_runaway(sol, medium, model)
    return sol


def calibrate_alpha(model: MetabolicModel, medium: MediumSpec, state: AvailabilityState,
                    schedule: AlphaSchedule = AlphaSchedule(),
                    solver: Optional[LpSolver] = None,
                    problem: Optional[MediumProblem] = None) -> tuple:
    """Smallest ladder alpha at which biomass has stabilised, and that biomass.

    A pair of consecutive ladder values counts as stable when both give
    growth and the relative change is below the tolerance; the first member of
    the first stable pair is returned. Without a stable pair the ladder
    maximum is used.
    """
    problem = problem or MediumProblem(model, medium)
    ladder = schedule.alpha_values
    biomass = []
    basis = None
    for alpha in ladder:
        sol = problem.solve(state, alpha, basis, solver)
        basis = sol.basis
        biomass.append(sol.biomass)
        if len(biomass) >= 2:
            b0, b1 = biomass[-2], biomass[-1]
            if b0 > GROWTH_THRESHOLD and b1 > GROWTH_THRESHOLD and \
                    abs(b1 - b0) <= schedule.stabilization_tol * max(abs(b0), abs(b1)):
                return ladder[len(biomass) - 2], b0
    return ladder[-1], (biomass[-1] if biomass[-1] > GROWTH_THRESHOLD else 0.0)


def biomass_carbon_per_flux(model: MetabolicModel) -> float:
    """Carbon atoms consumed by one unit of biomass flux (reactant side)."""
    carbon = {m.id: m.carbon_count for m in model.metabolites}
    rxn = model.reactions[model.biomass_index]
    return float(sum(-coef * carbon.get(mid, 0) for mid, coef in rxn.stoichiometry.items() if coef < 0))


def carbon_uptake_capacity(medium: MediumSpec, model: MetabolicModel) -> float:
    carbon = {m.id: m.carbon_count for m in model.metabolites}
    return float(sum(s * carbon.get(mid, 0) for mid, s in medium.supply.items()))


def detect_runaway(solution: FluxSolution, medium: MediumSpec, model: MetabolicModel,
                   eps: float = RUNAWAY_EPS) -> bool:
    biomass_carbon = solution.biomass * biomass_carbon_per_flux(model)
    if biomass_carbon <= 0:
        return False
    return biomass_carbon > (1.0 + eps) * carbon_uptake_capacity(medium, model)


class PfbaEvaluator:
    """Solves pFBA for a fixed list of media under a given availability state.

    Warm starts always come from each medium's reference basis (set once,
    typically from preprocessing), so a result depends only on the state it
    was computed for. Results are memoised by state.
    """

    def __init__(self, model: MetabolicModel, media: Sequence[MediumSpec], alphas: dict,
                 solver: Optional[LpSolver] = None, threads: int = 1,
                 runaway_eps: float = RUNAWAY_EPS, cache_size: int = 200_000):
        self.model = model
        self.media = list(media)
        self.alphas = dict(alphas)
        self.solver = solver
        self.threads = max(1, int(threads))
        self.runaway_eps = runaway_eps
        self.problems = {m.id: MediumProblem(model, m) for m in self.media}
        self.reference_basis: dict = {}
        self.cache: dict = {}
        self.cache_size = cache_size
        self.solve_count = 0
        self._gene = model.gene_mask
        self._pool: Optional[ThreadPoolExecutor] = None

    def _solve_one(self, medium: MediumSpec, state: AvailabilityState) -> FluxSolution:
        sol = self.problems[medium.id].solve(state, self.alphas[medium.id],
                                             self.reference_basis.get(medium.id), self.solver)
        sol.runaway = detect_runaway(sol, medium, self.model, self.runaway_eps)
        return sol

    def set_reference(self, solutions: dict) -> None:
        for mid, sol in solutions.items():
            self.reference_basis[mid] = sol.basis

    def evaluate(self, state: AvailabilityState) -> dict:
        if not np.all(state.available[self._gene]):
            raise AssertionError("gene-indicated reaction unavailable in evaluated state")
        key = state.key()
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        if self.threads > 1 and len(self.media) > 1:
            if self._pool is None:
                self._pool = ThreadPoolExecutor(self.threads)
            sols = list(self._pool.map(lambda m: self._solve_one(m, state), self.media))
        else:
            sols = [self._solve_one(m, state) for m in self.media]
        self.solve_count += len(sols)
        result = {s.medium_id: s for s in sols}
        if len(self.cache) < self.cache_size:
            self.cache[key] = result
        return result

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def __del__(self):
        self.close()
