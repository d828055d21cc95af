"""Taxonomy-informed reaction costs from a database of reference models."""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

RANKS = ("species", "genus", "family", "order", "class", "phylum")

RANK_COST_RANGES = {
    "species": (1.0, 2.0),
    "genus": (2.0, 10.0),
    "family": (10.0, 50.0),
    "order": (50.0, 250.0),
    "class": (250.0, 1250.0),
    "phylum": (1250.0, 6250.0),
}

ABSENT_COST = RANK_COST_RANGES["phylum"][1]


class NoMatchingRank(UserWarning):
    pass


@dataclass(frozen=True)
class TaxonomyRecord:
    model_id: str
    rank_labels: Mapping[str, str]
    reaction_ids: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        missing = [r for r in RANKS if not self.rank_labels.get(r)]
        if missing:
            raise ValueError(f"taxonomy record {self.model_id!r} missing ranks {missing}")
        object.__setattr__(self, "reaction_ids", frozenset(self.reaction_ids))

    @classmethod
    def from_dict(cls, doc: dict) -> "TaxonomyRecord":
        labels = doc.get("rank_labels") or {r: doc[r] for r in RANKS if r in doc}
        return cls(doc.get("model_id", "target"), dict(labels), frozenset(doc.get("reaction_ids", ())))

    def to_dict(self) -> dict:
        return {"model_id": self.model_id, "rank_labels": dict(self.rank_labels),
                "reaction_ids": sorted(self.reaction_ids)}


def matches(record: TaxonomyRecord, target: TaxonomyRecord, rank: str) -> bool:
    """Labels agree at ``rank``; "first matches at k" is matches(k) and not matches(k-1)."""
    return record.rank_labels[rank] == target.rank_labels[rank]


def rank_cost(rank: str, proportion: float) -> float:
    lower, upper = RANK_COST_RANGES[rank]
    return lower + (1.0 - proportion) * (upper - lower)


def reaction_costs(db: Sequence[TaxonomyRecord], target: TaxonomyRecord,
                   universe: Iterable[str]) -> dict:
    """Cost per reaction: minimum over ranks of the inverse-linear rank cost.

    Ranks with no matching reference model are skipped. A reaction found in no
    reference model at all costs the phylum upper bound.
    """
    if not db:
        raise ValueError("taxonomy database is empty")
    universe = list(universe)
    seen = set().union(*(rec.reaction_ids for rec in db))
    pools = {k: [rec for rec in db if matches(rec, target, k)] for k in RANKS}
    active = [k for k in RANKS if pools[k]]
    if not active:
        warnings.warn(f"no reference model matches {target.model_id!r} at any rank; "
                      f"all costs set to {ABSENT_COST}", NoMatchingRank)
        return {rid: ABSENT_COST for rid in universe}
    counts = {k: {} for k in active}
    for k in active:
        for rec in pools[k]:
            for rid in rec.reaction_ids:
                counts[k][rid] = counts[k].get(rid, 0) + 1
    costs = {}
    for rid in universe:
        if rid not in seen:
            costs[rid] = ABSENT_COST
            continue
        costs[rid] = min(rank_cost(k, counts[k].get(rid, 0) / len(pools[k])) for k in active)
    return costs


def load_db(path) -> list:
    records = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            records.append(TaxonomyRecord.from_dict(json.loads(line)))
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return records


def load_target(path) -> TaxonomyRecord:
    return TaxonomyRecord.from_dict(json.loads(Path(path).read_text()))


def write_costs_csv(costs: Mapping[str, float], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["reaction_id", "cost"])
        writer.writerows((rid, repr(float(c))) for rid, c in costs.items())


def read_costs_csv(path) -> dict:
    with open(path, newline="") as fh:
        return {row["reaction_id"]: float(row["cost"]) for row in csv.DictReader(fh)}
