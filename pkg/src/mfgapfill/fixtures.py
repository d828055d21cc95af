"""Small hand-built networks and table-derived synthetic instances.

Used by the test suite, the experiment scripts and the CLI examples in the
README. Every builder returns ``(model, media)``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .model import GrowthClass, MediumSpec, Metabolite, MetabolicModel, Reaction


def _met(mid, carbon=0):
    return Metabolite(mid, mid, carbon)


def _rxn(rid, stoich, cost=1.0, gene=False, ub=10.0, rev=False):
    return Reaction(rid, dict(stoich), rev, gene, cost if not gene else 1.0, ub)


def toy_network():
    """Three-reaction network over metabolites A..G feeding a biomass drain.

    R1: A -> C + D;  R2: B + C -> E + F;  R3: D + E -> G;  biomass: F + G ->
    Carbon counts are chosen so every reaction is carbon balanced.
    """
    carbons = dict(A=2, B=2, C=1, D=1, E=2, F=1, G=3)
    mets = [_met(k, v) for k, v in carbons.items()]
    rxns = [
        _rxn("biomass", {"F": -1, "G": -1}, gene=True),
        _rxn("R1", {"A": -1, "C": 1, "D": 1}, gene=True),
        _rxn("R2", {"B": -1, "C": -1, "E": 1, "F": 1}, gene=True),
        _rxn("R3", {"D": -1, "E": -1, "G": 1}, gene=True),
    ]
    model = MetabolicModel(mets, rxns, "biomass")
    media = [MediumSpec("AB", "A", {"A": 1.0, "B": 1.0}, {}, 10.0, GrowthClass.GROWTH),
             MediumSpec("empty", "A", {}, {}, 0.0, GrowthClass.NO_GROWTH)]
    return model, media


def cost_weighting_network():
    """Two equal-yield routes S -> P; only their costs differ."""
    mets = [_met("S", 1), _met("P", 1)]
    rxns = [
        _rxn("biomass", {"P": -1}, gene=True),
        _rxn("cheap", {"S": -1, "P": 1}, cost=2.0),
        _rxn("dear", {"S": -1, "P": 1}, cost=5.0),
    ]
    media = [MediumSpec("S", "S", {"S": 1.0}, {}, 1.0)]
    return MetabolicModel(mets, rxns, "biomass"), media


def runaway_network():
    """S -> X -> Y -> biomass, plus a candidate X -> 2 Y that doubles carbon."""
    mets = [_met("S", 1), _met("X", 1), _met("Y", 1)]
    rxns = [
        _rxn("biomass", {"Y": -1}, gene=True),
        _rxn("uptake", {"S": -1, "X": 1}, gene=True),
        _rxn("convert", {"X": -1, "Y": 1}, gene=True),
        _rxn("duplicate", {"X": -1, "Y": 2}, cost=1.5),
    ]
    media = [MediumSpec("S", "S", {"S": 1.0}, {}, 1.0)]
    return MetabolicModel(mets, rxns, "biomass"), media


def order_sensitivity_network(first: str = "M1"):
    """Two media whose sequential processing order changes the selected set.

    M1 (carbon A) grows via ``direct`` (A -> P) or via gene ``toQ_A`` plus the
    shared candidate ``shared`` (Q -> P); M2 (carbon B) only via ``toQ_B`` +
    ``shared``. ``first`` picks which medium has the larger growth score.
    """
    mets = [_met("A", 1), _met("B", 1), _met("Q", 1), _met("P", 1)]
    rxns = [
        _rxn("biomass", {"P": -1}, gene=True),
        _rxn("toQ_A", {"A": -1, "Q": 1}, gene=True),
        _rxn("toQ_B", {"B": -1, "Q": 1}, gene=True),
        _rxn("direct", {"A": -1, "P": 1}, cost=2.5),
        _rxn("shared", {"Q": -1, "P": 1}, cost=3.0),
    ]
    hi, lo = (10.0, 5.0) if first == "M1" else (5.0, 10.0)
    media = [MediumSpec("M1", "A", {"A": 1.0}, {}, hi), MediumSpec("M2", "B", {"B": 1.0}, {}, lo)]
    return MetabolicModel(mets, rxns, "biomass"), media


def integral_root_network():
    """Flux through the only candidate is pinned at its capacity, so the LP
    relaxation of the gap-filling MILP is already integral."""
    mets = [_met("A", 1), _met("P", 1)]
    rxns = [_rxn("biomass", {"P": -1}, gene=True), _rxn("take", {"A": -1, "P": 1}, cost=2.0, ub=1.0)]
    media = [MediumSpec("A", "A", {"A": 1.0}, {}, 1.0)]
    return MetabolicModel(mets, rxns, "biomass"), media


def search_instance():
    """Five media, one gene-indicated route and twelve candidates.

    Biomass drains 0.01 P per unit; each carbon source is supplied at 0.02,
    so a route of yield y gives biomass 2y. Candidate costs stay far below
    the biomass value of one extra unit of yield, so evaluation costs never
    change routing and the objective depends on availability alone.
    """
    mets = [_met(f"cs{k}", 6) for k in range(1, 6)] + [_met("A", 6), _met("Q", 6), _met("P", 1),
                                                       _met("W", 1)]
    rxns = [
        _rxn("biomass", {"P": -0.01}, gene=True),
        _rxn("g1", {"cs1": -1, "P": 2}, gene=True),
        _rxn("a1", {"cs1": -1, "P": 3}, cost=4.0),
        _rxn("b1", {"cs2": -1, "P": 1}, cost=1.6),
        _rxn("b2", {"cs2": -1, "P": 2}, cost=3.0),
        _rxn("b3", {"cs2": -1, "P": 3}, cost=2.0),
        _rxn("c1", {"cs3": -1, "Q": 1}, cost=1.5),
        _rxn("c2", {"Q": -1, "P": 1}, cost=1.5),
        _rxn("c3", {"cs3": -1, "P": 2}, cost=6.0),
        _rxn("d1", {"cs5": -1, "P": 1.5}, cost=2.0),
        _rxn("d2", {"cs5": -1, "cs2": 1}, cost=1.5),
        _rxn("e1", {"cs4": -1, "cs3": 1}, cost=1.2),
        _rxn("e2", {"cs4": -1, "P": 1}, cost=8.0),
        _rxn("f1", {"P": -1, "W": 1}, cost=1.1),
    ]
    media = [
        MediumSpec("m1", "cs1", {"cs1": 0.02}, {}, 900.0),
        MediumSpec("m2", "cs2", {"cs2": 0.02}, {}, 600.0),
        MediumSpec("m3", "cs3", {"cs3": 0.02}, {}, 300.0),
        MediumSpec("m4", "cs4", {"cs4": 0.02}, {}, 50.0, GrowthClass.NO_GROWTH),
        MediumSpec("m5", "cs5", {"cs5": 0.02}, {}, 450.0),
    ]
    return MetabolicModel(mets, rxns, "biomass"), media


def random_network(seed: int, n_metabolites: int = 4, n_reactions: int = 6, p_reversible: float = 0.3):
    """Random small network with a biomass drain; intended for oracle tests."""
    rng = np.random.default_rng(seed)
    mets = [_met(f"M{j}", int(rng.integers(1, 4))) for j in range(n_metabolites)]
    rxns = []
    k = int(rng.integers(1, min(2, n_metabolites) + 1))
    drain = rng.choice(n_metabolites, size=k, replace=False)
    rxns.append(_rxn("biomass", {f"M{j}": -float(rng.integers(1, 3)) for j in drain}, gene=True,
                     ub=float(rng.integers(2, 8))))
    for i in range(n_reactions - 1):
        picks = rng.choice(n_metabolites, size=int(rng.integers(1, min(3, n_metabolites) + 1)), replace=False)
        stoich = {f"M{j}": float(rng.choice([-2, -1, 1, 2])) for j in picks}
        gene = bool(rng.random() < 0.4)
        rxns.append(_rxn(f"R{i}", stoich, cost=float(rng.choice([1.0, 1.5, 2.0, 4.0])), gene=gene,
                         ub=float(rng.integers(1, 6)), rev=bool(rng.random() < p_reversible)))
    supplied = rng.choice(n_metabolites, size=int(rng.integers(1, n_metabolites + 1)), replace=False)
    medium = MediumSpec("rand", f"M{supplied[0]}", {f"M{j}": float(rng.integers(1, 4)) for j in supplied},
                        {f"M{j}": float(rng.integers(0, 5)) for j in range(n_metabolites)}, 1.0)
    return MetabolicModel(mets, rxns, "biomass"), [medium]


# --- growth tables -----------------------------------------------------------------

@dataclass(frozen=True)
class GrowthRow:
    medium: str
    growth_score: float
    growth_class: GrowthClass
    target: float
    baseline: float
    mip_seq: float
    lp_seq: float


TABLES = {"pa01": "pa01_growth.csv", "ecoli": "ecoli_growth.csv", "kpneu": "kpneu_growth.csv"}


def growth_table(name: str) -> list:
    text = resources.files("mfgapfill.data").joinpath(TABLES[name]).read_text()
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    return [
        GrowthRow(r["medium"], float(r["growth_score"]), GrowthClass.parse(r["growth_class"]),
                  float(r["target"]), float(r["baseline"]), float(r["mip_seq"]), float(r["lp_seq"]))
        for r in csv.DictReader(lines)
    ]


def table_path(name: str):
    return resources.files("mfgapfill.data").joinpath(TABLES[name])


def table_analog(name: str, reference_biomass: float, unrepresentable=()):
    """Synthetic model reproducing a growth table's baseline column.

    Each representable carbon source gets a gene-indicated route whose yield
    equals the table's baseline prediction and a candidate route whose yield
    covers the target. The reference (largest score) medium's candidate route
    yields exactly ``reference_biomass``. Carbon sources in ``unrepresentable``
    have no consuming reaction and cannot produce biomass.
    """
    rows = growth_table(name)
    ref = max(rows, key=lambda r: r.growth_score)
    mets = [_met("P", 1)]
    rxns = [_rxn("biomass", {"P": -1}, gene=True, ub=100.0)]
    media = []
    for k, row in enumerate(rows):
        cs = f"cs_{k:02d}"
        mets.append(_met(cs, 6))
        if row.baseline > 0:
            rxns.append(_rxn(f"gene_{k:02d}", {cs: -1, "P": row.baseline}, gene=True))
        best = reference_biomass if row is ref else max(row.target, row.baseline) * 1.5 + 0.05
        rxns.append(_rxn(f"cand_{k:02d}", {cs: -1, "P": best}, cost=5.0 + k))
        media.append(MediumSpec(row.medium, cs, {cs: 1.0}, {}, row.growth_score, row.growth_class))
    for k, name_ in enumerate(unrepresentable):
        cs = f"cs_x{k:02d}"
        mets.append(_met(cs, 6))
        media.append(MediumSpec(name_, cs, {cs: 1.0}, {}, 100.0, GrowthClass.GROWTH))
    return MetabolicModel(mets, rxns, "biomass"), media


def pa01_analog():
    """22 representable + 6 unrepresentable media; citrate reference at 1.076."""
    return table_analog("pa01", 1.076, [f"unrepresentable_{k}" for k in range(1, 7)])


def ecoli_analog():
    """22 representable media plus pyruvate and guanosine without any route."""
    return table_analog("ecoli", 0.78, ["Pyruvate", "Guanosine"])
