"""Metabolic network, media and decision-state types, plus JSON interchange."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

COEF_TOL = 1e-9
DEFAULT_DEMAND_CAP = 1e4


class ModelFormatError(ValueError):
    """Raised when a model or media document cannot be parsed."""


class GrowthClass(enum.Enum):
    GROWTH = "Growth"
    NO_GROWTH = "NoGrowth"

    @classmethod
    def parse(cls, value) -> "GrowthClass":
        if isinstance(value, cls):
            return value
        for member in cls:
            if member.value == value:
                return member
        raise ModelFormatError(f"unknown growth_class {value!r} (expected 'Growth' or 'NoGrowth')")


@dataclass(frozen=True)
class Metabolite:
    id: str
    name: str = ""
    carbon_count: int = 0


@dataclass(frozen=True)
class Reaction:
    id: str
    stoichiometry: Mapping[str, float]
    reversible: bool = False
    gene_indicated: bool = False
    cost: float = 1.0
    flux_upper_bound: float = 1000.0
    name: str = ""


@dataclass(frozen=True)
class MetabolicModel:
    metabolites: tuple
    reactions: tuple
    biomass_reaction_id: str

    def __post_init__(self):
        object.__setattr__(self, "metabolites", tuple(self.metabolites))
        object.__setattr__(self, "reactions", tuple(self.reactions))

    @property
    def metabolite_index(self) -> dict:
        return {m.id: j for j, m in enumerate(self.metabolites)}

    @property
    def reaction_index(self) -> dict:
        return {r.id: i for i, r in enumerate(self.reactions)}

    @property
    def biomass_index(self) -> int:
        return self.reaction_index[self.biomass_reaction_id]

    @property
    def reaction_costs(self) -> np.ndarray:
        return np.array([r.cost for r in self.reactions], dtype=float)

    @property
    def gene_mask(self) -> np.ndarray:
        mask = np.array([r.gene_indicated for r in self.reactions], dtype=bool)
        if self.reactions:
            mask[self.biomass_index] = True
        return mask

    def candidate_indices(self) -> list:
        """Indices of gap-filling candidates (not gene-indicated, not biomass)."""
        gene = self.gene_mask
        return [i for i in range(len(self.reactions)) if not gene[i]]

    def with_costs(self, costs: Mapping[str, float]) -> "MetabolicModel":
        from dataclasses import replace

        reactions = [
            replace(r, cost=float(costs[r.id])) if r.id in costs and not r.gene_indicated else r
            for r in self.reactions
        ]
        return MetabolicModel(self.metabolites, reactions, self.biomass_reaction_id)


@dataclass(frozen=True)
class MediumSpec:
    id: str
    carbon_source: str
    supply: Mapping[str, float] = field(default_factory=dict)
    demand: Mapping[str, float] = field(default_factory=dict)
    growth_score: float = 0.0
    growth_class: GrowthClass = GrowthClass.GROWTH

    def row_bounds(self, model: MetabolicModel, demand_cap: float = DEFAULT_DEMAND_CAP):
        """Per-metabolite (lower, upper) bounds on net production: [-S_j, D_j]."""
        lower = np.array([-float(self.supply.get(m.id, 0.0)) for m in model.metabolites])
        upper = np.array([float(self.demand.get(m.id, demand_cap)) for m in model.metabolites])
        return lower, upper


@dataclass
class AvailabilityState:
    """Outer decision: availability and evaluation cost per reaction (model order).

    The biomass entry is carried for alignment and is always available.
    """

    available: np.ndarray
    eval_costs: np.ndarray

    @classmethod
    def all_available(cls, model: MetabolicModel) -> "AvailabilityState":
        costs = model.reaction_costs.copy()
        costs[model.gene_mask] = 1.0
        return cls(np.ones(len(model.reactions), dtype=bool), costs)

    @classmethod
    def gene_only(cls, model: MetabolicModel) -> "AvailabilityState":
        state = cls.all_available(model)
        state.available = model.gene_mask.copy()
        return state

    def copy(self) -> "AvailabilityState":
        return AvailabilityState(self.available.copy(), self.eval_costs.copy())

    def key(self) -> bytes:
        return np.packbits(self.available).tobytes() + self.eval_costs.tobytes()

    def to_json(self, model: MetabolicModel) -> dict:
        return {
            "available": [r.id for r, a in zip(model.reactions, self.available) if a],
            "unit_cost": [r.id for r, c in zip(model.reactions, self.eval_costs)
                          if c == 1.0 and r.cost != 1.0],
        }

    @classmethod
    def from_json(cls, model: MetabolicModel, doc: dict) -> "AvailabilityState":
        index = model.reaction_index
        state = cls.all_available(model)
        state.available[:] = False
        for rid in doc["available"]:
            state.available[index[rid]] = True
        state.available[model.gene_mask] = True
        for rid in doc.get("unit_cost", []):
            state.eval_costs[index[rid]] = 1.0
        return state


@dataclass(frozen=True)
class Violation:
    rule: str
    entity: str
    message: str = ""


@dataclass(frozen=True)
class ExpandedNetwork:
    """Directed columns of a network; reversible reactions are split in two."""

    matrix: np.ndarray  # metabolites x columns
    upper: np.ndarray
    cost: np.ndarray
    parent: np.ndarray
    direction: np.ndarray  # +1 forward, -1 reverse
    biomass_column: int

    @property
    def num_columns(self) -> int:
        return len(self.parent)

    def aggregate(self, column_flux: np.ndarray, num_reactions: int) -> np.ndarray:
        """Net flux per parent reaction (forward - reverse)."""
        net = np.zeros(num_reactions)
        np.add.at(net, self.parent, self.direction * column_flux)
        return net


def validate_model(model: MetabolicModel) -> list:
    violations = []
    met_ids = set()
    for met in model.metabolites:
        if not met.id:
            violations.append(Violation("EmptyMetaboliteId", repr(met.name)))
        if met.id in met_ids:
            violations.append(Violation("DuplicateMetaboliteId", met.id))
        met_ids.add(met.id)
        if met.carbon_count < 0:
            violations.append(Violation("NegativeCarbonCount", met.id))
    rxn_ids = set()
    for rxn in model.reactions:
        if not rxn.id:
            violations.append(Violation("EmptyReactionId", repr(rxn.name)))
        if rxn.id in rxn_ids:
            violations.append(Violation("DuplicateReactionId", rxn.id))
        rxn_ids.add(rxn.id)
        if not any(abs(v) > COEF_TOL for v in rxn.stoichiometry.values()):
            violations.append(Violation("EmptyStoichiometry", rxn.id))
        for mid in rxn.stoichiometry:
            if mid not in met_ids:
                violations.append(Violation("UnknownMetabolite", rxn.id, f"references {mid!r}"))
        if rxn.cost < 1.0:
            violations.append(Violation("CostBelowOne", rxn.id, f"cost {rxn.cost}"))
        elif rxn.gene_indicated and abs(rxn.cost - 1.0) > COEF_TOL:
            violations.append(Violation("GeneIndicatedCostNotOne", rxn.id, f"cost {rxn.cost}"))
        if not rxn.flux_upper_bound > 0:
            violations.append(Violation("NonPositiveUpperBound", rxn.id))
    biomass = [r for r in model.reactions if r.id == model.biomass_reaction_id]
    if not biomass:
        violations.append(Violation("MissingBiomassReaction", model.biomass_reaction_id))
    elif not biomass[0].gene_indicated:
        violations.append(Violation("BiomassNotGeneIndicated", model.biomass_reaction_id))
    return violations


def stoichiometric_matrix(model: MetabolicModel) -> np.ndarray:
    met_index = model.metabolite_index
    A = np.zeros((len(model.metabolites), len(model.reactions)))
    for i, rxn in enumerate(model.reactions):
        for mid, coef in rxn.stoichiometry.items():
            A[met_index[mid], i] = coef
    return A


def expand(model: MetabolicModel, state: Optional[AvailabilityState] = None) -> ExpandedNetwork:
    """Split reversible reactions into forward/reverse columns.

    Column order: reactions in model order, the reverse column directly after
    its forward twin. Unavailable reactions get upper bound 0. The biomass
    reaction is always irreversible.
    """
    A = stoichiometric_matrix(model)
    biomass = model.biomass_index
    available = np.ones(len(model.reactions), dtype=bool) if state is None else state.available
    costs = model.reaction_costs if state is None else state.eval_costs
    cols, upper, cost, parent, direction = [], [], [], [], []
    biomass_col = -1
    for i, rxn in enumerate(model.reactions):
        ub = rxn.flux_upper_bound if available[i] or i == biomass else 0.0
        if i == biomass:
            biomass_col = len(parent)
        cols.append(A[:, i]); upper.append(ub); cost.append(0.0 if i == biomass else costs[i])
        parent.append(i); direction.append(1)
        if rxn.reversible and i != biomass:
            cols.append(-A[:, i]); upper.append(ub); cost.append(costs[i])
            parent.append(i); direction.append(-1)
    matrix = np.column_stack(cols) if cols else np.zeros((len(model.metabolites), 0))
    return ExpandedNetwork(matrix, np.array(upper, dtype=float), np.array(cost, dtype=float),
                           np.array(parent, dtype=int), np.array(direction, dtype=int), biomass_col)


# --- JSON interchange -----------------------------------------------------

def _load_json(path) -> object:
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc


def model_from_dict(doc: dict) -> MetabolicModel:
    try:
        mets = [Metabolite(m["id"], m.get("name", ""), int(m.get("carbon_count", 0)))
                for m in doc["metabolites"]]
        rxns = [
            Reaction(
                id=r["id"],
                stoichiometry={k: float(v) for k, v in r["stoich"].items()},
                reversible=bool(r.get("reversible", False)),
                gene_indicated=bool(r.get("gene_indicated", False)),
                cost=float(r.get("cost", 1.0)),
                flux_upper_bound=float(r.get("ub", 1000.0)),
                name=r.get("name", ""),
            )
            for r in doc["reactions"]
        ]
        return MetabolicModel(mets, rxns, doc["biomass_reaction_id"])
    except (KeyError, TypeError, AttributeError) as exc:
        raise ModelFormatError(f"malformed model document: missing or invalid field {exc}") from exc


def model_to_dict(model: MetabolicModel) -> dict:
    return {
        "metabolites": [{"id": m.id, "name": m.name, "carbon_count": m.carbon_count}
                        for m in model.metabolites],
        "reactions": [
            {"id": r.id, "name": r.name, "stoich": dict(r.stoichiometry), "reversible": r.reversible,
             "gene_indicated": r.gene_indicated, "cost": r.cost, "ub": r.flux_upper_bound}
            for r in model.reactions
        ],
        "biomass_reaction_id": model.biomass_reaction_id,
    }


def medium_from_dict(doc: dict) -> MediumSpec:
    try:
        supply = {k: float(v) for k, v in doc.get("supply", {}).items()}
        demand = {k: float(v) for k, v in doc.get("demand", {}).items()}
        if any(v < 0 for v in supply.values()) or any(v < 0 for v in demand.values()):
            raise ModelFormatError(f"medium {doc.get('id')!r}: supply/demand must be nonnegative")
        return MediumSpec(doc["id"], doc.get("carbon_source", ""), supply, demand,
                          float(doc.get("growth_score", 0.0)),
                          GrowthClass.parse(doc.get("growth_class", "Growth")))
    except (KeyError, TypeError, AttributeError) as exc:
        raise ModelFormatError(f"malformed medium document: {exc}") from exc


def medium_to_dict(medium: MediumSpec) -> dict:
    return {"id": medium.id, "carbon_source": medium.carbon_source, "supply": dict(medium.supply),
            "demand": dict(medium.demand), "growth_score": medium.growth_score,
            "growth_class": medium.growth_class.value}


def load_model(path) -> MetabolicModel:
    doc = _load_json(path)
    if not isinstance(doc, dict):
        raise ModelFormatError(f"{path}: model document must be a JSON object")
    return model_from_dict(doc)


def load_media(path) -> list:
    doc = _load_json(path)
    if isinstance(doc, dict):
        doc = [doc]
    if not isinstance(doc, list):
        raise ModelFormatError(f"{path}: media document must be a JSON array")
    return [medium_from_dict(d) for d in doc]


def save_model(model: MetabolicModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=2))


def save_media(media: Sequence[MediumSpec], path) -> None:
    Path(path).write_text(json.dumps([medium_to_dict(m) for m in media], indent=2))
