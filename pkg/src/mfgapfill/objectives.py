"""Objective components, scalarisation, reporting metrics and Pareto dominance."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .model import GrowthClass, MediumSpec, MetabolicModel
from .pfba import FLUX_USE_THRESHOLD, GROWTH_THRESHOLD

GME_SYMMETRIC = "symmetric"
GME_FALSE_NEGATIVE = "false-negative"


class ZeroReferenceScore(ValueError):
    pass


@dataclass(frozen=True)
class Betas:
    cost: float = 1.0
    gme: float = 1000.0
    tau: float = 10.0
    error: float = 1.0

    def __post_init__(self):
        if min(self.cost, self.gme, self.tau, self.error) < 0:
            raise ValueError("betas must be nonnegative")


REGIMES = {
    "cost/error": Betas(cost=100.0, error=1.0),
    "error/cost": Betas(cost=1.0, error=100.0),
    "cost+error": Betas(cost=1.0, error=1.0),
}


@dataclass
class TargetSet:
    reference_medium: str
    reference_biomass: float
    targets: dict
    growth_classes: dict
    growth_scores: dict = field(default_factory=dict)

    @property
    def media_ids(self) -> list:
        return list(self.targets)

    def restricted(self, media_ids: Sequence[str]) -> "TargetSet":
        keep = list(media_ids)
        return TargetSet(self.reference_medium, self.reference_biomass,
                         {k: self.targets[k] for k in keep},
                         {k: self.growth_classes[k] for k in keep},
                         {k: self.growth_scores[k] for k in keep if k in self.growth_scores})


@dataclass
class Evaluation:
    cost_raw: float
    cost: float
    gme: int
    tau: float
    tau_prime: float
    rms: float
    mape: float
    objective: float
    n_used: int = 0
    tau_degenerate: bool = False

    @property
    def components(self) -> tuple:
        return (self.cost, self.gme, self.tau_prime, self.rms)

    def to_dict(self, betas: Optional[Betas] = None) -> dict:
        out = asdict(self)
        if betas is not None:
            out["betas"] = asdict(betas)
        return out

    CSV_FIELDS = ("cost_raw", "cost", "gme", "tau", "tau_prime", "rms", "mape", "objective", "n_used")

    def csv_row(self) -> list:
        return [repr(float(getattr(self, f))) if isinstance(getattr(self, f), float) else str(getattr(self, f))
                for f in self.CSV_FIELDS]


def reference_medium(media: Sequence[MediumSpec]) -> MediumSpec:
    """Largest growth score; ties broken by medium id."""
    return min(media, key=lambda m: (-m.growth_score, m.id))


def compute_targets(media: Sequence[MediumSpec], reference_biomass: float,
                    reference_medium_id: Optional[str] = None) -> TargetSet:
    ref = (next(m for m in media if m.id == reference_medium_id) if reference_medium_id
           else reference_medium(media))
    if ref.growth_score <= 0:
        raise ZeroReferenceScore(f"reference medium {ref.id} has growth score 0")
    scale = reference_biomass / ref.growth_score
    targets = {m.id: (reference_biomass if m.id == ref.id else m.growth_score * scale) for m in media}
    return TargetSet(ref.id, reference_biomass, targets,
                     {m.id: m.growth_class for m in media},
                     {m.id: m.growth_score for m in media})


def growth_match_error(predicted: Mapping[str, float], growth_classes: Mapping[str, GrowthClass],
                       threshold: float = GROWTH_THRESHOLD, rule: str = GME_SYMMETRIC) -> int:
    """Number of media whose predicted growth disagrees with the observed class.

    ``rule="false-negative"`` only counts observed-growth media predicted not
    to grow.
    """
    count = 0
    for mid, cls in growth_classes.items():
        grows = predicted[mid] > threshold
        observed = cls == GrowthClass.GROWTH
        if rule == GME_FALSE_NEGATIVE:
            count += observed and not grows
        elif rule == GME_SYMMETRIC:
            count += grows != observed
        else:
            raise ValueError(f"unknown GME rule {rule!r}")
    return int(count)


TIE_TOL = 1e-9


def _pair_signs(v: np.ndarray) -> np.ndarray:
    diff = v[:, None] - v[None, :]
    return np.where(np.abs(diff) <= TIE_TOL, 0.0, np.sign(diff))


def kendall_tau(predicted: Sequence[float], scores: Sequence[float]) -> tuple:
    """Tie-corrected Kendall tau-b. Returns (tau, tau_prime, degenerate).

    A constant input leaves tau undefined; it is reported as 0 with the
    degenerate flag set. Values closer than ``TIE_TOL`` count as tied so LP
    round-off does not invent an ordering.
    """
    x = np.asarray(predicted, dtype=float)
    y = np.asarray(scores, dtype=float)
    if len(x) != len(y) or len(x) < 2:
        raise ValueError("kendall_tau needs two equal-length vectors of length >= 2")
    dx = _pair_signs(x)
    dy = _pair_signs(y)
    iu = np.triu_indices(len(x), 1)
    sx, sy = dx[iu], dy[iu]
    n0 = len(sx)
    concord_minus_discord = float(np.sum(sx * sy))
    ties_x = float(np.sum(sx == 0))
    ties_y = float(np.sum(sy == 0))
    denom = math.sqrt((n0 - ties_x) * (n0 - ties_y))
    if denom == 0:
        return 0.0, 1.0, True
    tau = concord_minus_discord / denom
    return tau, 1.0 - tau, False


def rms_error(predicted: Mapping[str, float], targets: Mapping[str, float]) -> float:
    if not targets:
        raise ValueError("rms_error needs at least one medium")
    diff = np.array([targets[k] - predicted[k] for k in targets])
    return float(math.sqrt(np.mean(diff ** 2)))


def mape(predicted: Mapping[str, float], targets: Mapping[str, float]) -> float:
    """Mean absolute percentage error against targets; zero targets are skipped."""
    terms = [abs(t - predicted[k]) / t for k, t in targets.items() if t > 0]
    return 100.0 * float(np.mean(terms)) if terms else 0.0


def used_cost(solutions: Mapping, model: MetabolicModel,
              threshold: float = FLUX_USE_THRESHOLD) -> tuple:
    """Sum of original costs over non-biomass reactions carrying flux in any medium."""
    if not solutions:
        return 0.0, set()
    flux = np.max(np.abs(np.vstack([s.net_flux for s in solutions.values()])), axis=0)
    used = flux > threshold
    used[model.biomass_index] = False
    costs = model.reaction_costs
    ids = {model.reactions[i].id for i in np.flatnonzero(used)}
    return float(costs[used].sum()), ids


def scalarize(components: Sequence[float], betas: Betas) -> float:
    cost, gme, tau_prime, rms = components
    return betas.cost * cost + betas.gme * gme + betas.tau * tau_prime + betas.error * rms


def dominates(a, b) -> bool:
    ca = a.components if hasattr(a, "components") else tuple(a)
    cb = b.components if hasattr(b, "components") else tuple(b)
    return all(x <= y for x, y in zip(ca, cb)) and any(x < y for x, y in zip(ca, cb))


def evaluate_predictions(predicted: Mapping[str, float], targets: TargetSet, betas: Betas,
                         cost_raw: float = 0.0, c0: float = 1.0, n_used: int = 0,
                         threshold: float = GROWTH_THRESHOLD, gme_rule: str = GME_SYMMETRIC) -> Evaluation:
    ids = targets.media_ids
    gme = growth_match_error(predicted, targets.growth_classes, threshold, gme_rule)
    scores = [targets.growth_scores.get(k, targets.targets[k]) for k in ids]
    if len(ids) >= 2:
        tau, tau_prime, degenerate = kendall_tau([predicted[k] for k in ids], scores)
    else:
        tau, tau_prime, degenerate = 0.0, 1.0, True
    rms = rms_error(predicted, targets.targets)
    err = mape(predicted, targets.targets)
    cost = cost_raw / c0
    obj = scalarize((cost, gme, tau_prime, rms), betas)
    return Evaluation(cost_raw, cost, gme, tau, tau_prime, rms, err, obj, n_used, degenerate)


def evaluate_solutions(solutions: Mapping, model: MetabolicModel, targets: TargetSet,
                       betas: Betas, c0: float, gme_rule: str = GME_SYMMETRIC) -> tuple:
    """Evaluation plus the set of used reaction ids."""
    cost_raw, used = used_cost(solutions, model)
    predicted = {k: solutions[k].biomass for k in targets.media_ids}
    ev = evaluate_predictions(predicted, targets, betas, cost_raw, c0, len(used), gme_rule=gme_rule)
    return ev, used
