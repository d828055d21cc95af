"""Command-line entry points.

Exit codes: 0 success, 2 input error, 3 solver failure, 4 time/node limit
reached (partial output written).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
import time
import warnings
from dataclasses import asdict
from pathlib import Path

from . import __version__
from .model import (AvailabilityState, GrowthClass, ModelFormatError, load_media, load_model,
                    validate_model)
from .objectives import (GME_FALSE_NEGATIVE, GME_SYMMETRIC, REGIMES, Betas, Evaluation, TargetSet,
                         compute_targets, evaluate_predictions)
from .pfba import AlphaSchedule, ModelDataError, SolveFailed, calibrate_alpha, solve_pfba
from .search import (AllMediaInfeasible, MultiFactorialSearch, SearchConfig, load_checkpoint,
                     preprocess, save_checkpoint)
from .baselines import SequentialConfig, run_lp_seq, run_mip_seq
from .taxcost import NoMatchingRank, load_db, load_target, read_costs_csv, reaction_costs, write_costs_csv

log = logging.getLogger("mfgapfill")

THREADS_ENV = "MFGAPFILL_THREADS"
EXIT_OK, EXIT_INPUT, EXIT_SOLVER, EXIT_TRUNCATED = 0, 2, 3, 4


class InputError(Exception):
    pass


# --- configuration ----------------------------------------------------------------

_BETA_KEYS = {"beta_c": "cost", "beta_gme": "gme", "beta_tau": "tau", "beta_e": "error"}


def parse_config_text(text: str) -> dict:
    """Flat ``key=value`` lines; '#' starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"config line {lineno}: expected key=value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def build_search_config(values: dict) -> SearchConfig:
    """SearchConfig from string values. A regime sets beta_c/beta_e unless
    those are given explicitly."""
    values = dict(values)
    regime = values.pop("regime", "cost+error")
    if regime not in REGIMES:
        raise InputError(f"unknown regime {regime!r}; choose from {sorted(REGIMES)}")
    betas = asdict(REGIMES[regime])
    for key, attr in _BETA_KEYS.items():
        if key in values:
            betas[attr] = float(values.pop(key))
    defaults = SearchConfig()
    kwargs = {}
    for key, value in values.items():
        if key in ("betas", "schedule") or not hasattr(defaults, key):
            raise InputError(f"unknown config key {key!r}")
        kind = type(getattr(defaults, key))
        try:
            kwargs[key] = kind(value) if kind in (int, float) else value
        except ValueError as exc:
            raise InputError(f"config key {key}: {exc}") from exc
    if kwargs.get("gme_rule", GME_SYMMETRIC) not in (GME_SYMMETRIC, GME_FALSE_NEGATIVE):
        raise InputError(f"unknown gme_rule {kwargs['gme_rule']!r}")
    try:
        return SearchConfig(betas=Betas(**betas), regime=regime, **kwargs)
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# --- input helpers ------------------------------------------------------------------

def _load_inputs(args, need_media: bool = True):
    model = load_model(args.model)
    problems = validate_model(model)
    if problems:
        raise InputError("; ".join(f"{v.rule}({v.entity}): {v.message}" for v in problems))
    media = load_media(args.media) if need_media else None
    costs = getattr(args, "costs", None)
    if costs:
        model = model.with_costs(read_costs_csv(costs))
    elif getattr(args, "taxonomy_db", None):
        if not args.taxonomy_target:
            raise InputError("--taxonomy-db needs --taxonomy-target")
        with warnings.catch_warnings():
            warnings.simplefilter("always", NoMatchingRank)
            table = reaction_costs(load_db(args.taxonomy_db), load_target(args.taxonomy_target),
                                   [r.id for r in model.reactions])
        model = model.with_costs(table)
    return model, media


def _select_medium(media, medium_id):
    if medium_id is None:
        if len(media) != 1:
            raise InputError("media file holds several media; pass --medium-id")
        return media[0]
    for m in media:
        if m.id == medium_id:
            return m
    raise InputError(f"medium {medium_id!r} not found")


def _fmt(x) -> str:
    return repr(float(x))


def write_predictions_csv(path, targets: TargetSet, predicted: dict, evaluation: Evaluation,
                          c0: float, betas: Betas, gme_rule: str) -> None:
    """Per-medium prediction-vs-target table; header comments carry what is
    needed to recompute the full evaluation from the file alone."""
    with open(path, "w", newline="") as fh:
        for key, value in (("cost_raw", _fmt(evaluation.cost_raw)), ("c0", _fmt(c0)),
                           ("n_used", str(evaluation.n_used)), ("beta_c", _fmt(betas.cost)),
                           ("beta_gme", _fmt(betas.gme)), ("beta_tau", _fmt(betas.tau)),
                           ("beta_e", _fmt(betas.error)), ("gme_rule", gme_rule)):
            fh.write(f"# {key}={value}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["medium", "growth_score", "growth_class", "target", "predicted"])
        for mid in targets.media_ids:
            w.writerow([mid, _fmt(targets.growth_scores.get(mid, targets.targets[mid])),
                        targets.growth_classes[mid].value, _fmt(targets.targets[mid]), _fmt(predicted[mid])])


def read_predictions_csv(path, column: str = "predicted") -> tuple:
    """Returns (rows, metadata). Lines starting with '#' are comments; those
    of the form ``# key=value`` are collected as metadata."""
    meta, body = {}, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            text = line[1:].strip()
            if "=" in text and " " not in text.split("=", 1)[0]:
                k, v = text.split("=", 1)
                meta[k.strip()] = v.strip()
        elif line.strip():
            body.append(line)
    reader = csv.DictReader(io.StringIO("\n".join(body)))
    need = {"medium", "growth_class", column}
    if not reader.fieldnames or not need <= set(reader.fieldnames):
        raise InputError(f"{path}: missing columns {sorted(need - set(reader.fieldnames or []))}")
    rows = list(reader)
    for r in rows:
        if r[column] in ("", None):
            raise InputError(f"{path}: no {column} value for medium {r['medium']!r}")
    return rows, meta


def evaluate_rows(rows, column: str, meta: dict, reference_biomass=None, gme_rule=None,
                  betas: Betas = None) -> tuple:
    """Evaluation from a prediction table. Targets come from the ``target``
    column unless ``reference_biomass`` is given, in which case they are
    regenerated from the growth scores."""
    classes = {r["medium"]: GrowthClass.parse(r["growth_class"]) for r in rows}
    predicted = {r["medium"]: float(r[column]) for r in rows}
    scores = {r["medium"]: float(r["growth_score"]) for r in rows if r.get("growth_score") not in (None, "")}
    if reference_biomass is not None or "target" not in rows[0]:
        if reference_biomass is None:
            raise InputError("no target column; pass --reference-biomass")
        if len(scores) != len(rows):
            raise InputError("regenerating targets needs a growth_score for every medium")
        from .model import MediumSpec

        specs = [MediumSpec(m, m, {}, {}, scores[m], classes[m]) for m in predicted]
        targets = compute_targets(specs, float(reference_biomass))
    else:
        targets = TargetSet(max(scores, key=scores.get) if scores else rows[0]["medium"], 0.0,
                            {r["medium"]: float(r["target"]) for r in rows}, classes, scores)
    if betas is None:
        betas = Betas(*(float(meta.get(k, getattr(Betas(), a))) for k, a in _BETA_KEYS.items()))
    rule = gme_rule or meta.get("gme_rule", GME_SYMMETRIC)
    ev = evaluate_predictions(predicted, targets, betas, float(meta.get("cost_raw", 0.0)),
                              float(meta.get("c0", 1.0)), int(meta.get("n_used", 0)), gme_rule=rule)
    return ev, targets


def write_evaluation(path, evaluation: Evaluation, extra: dict = None) -> None:
    path = Path(path)
    if path.suffix == ".json":
        doc = evaluation.to_dict()
        doc.update(extra or {})
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    else:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(Evaluation.CSV_FIELDS)
            w.writerow(evaluation.csv_row())


def print_evaluation(ev: Evaluation, with_cost: bool, out=None) -> None:
    out = out or sys.stdout
    if with_cost:
        print(f"cost      {ev.cost:.6g}  (raw {ev.cost_raw:.6g}, {ev.n_used} reactions used)", file=out)
    print(f"GME       {ev.gme}", file=out)
    print(f"tau       {ev.tau:.4f}" + ("  (degenerate)" if ev.tau_degenerate else ""), file=out)
    print(f"RMS       {ev.rms:.4f}", file=out)
    print(f"MAPE      {ev.mape:.2f}%", file=out)
    if with_cost:
        print(f"objective {ev.objective:.6g}", file=out)


# --- pareto export ----------------------------------------------------------------

def write_pareto(out_dir, archive, model) -> None:
    out_dir = Path(out_dir)
    entries = sorted(archive.entries, key=lambda e: (e.evaluation.components, e.iteration))
    with open(out_dir / "pareto.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", *Evaluation.CSV_FIELDS, "excluded"])
        for e in entries:
            excluded = [model.reactions[i].id for i in model.candidate_indices() if not e.state.available[i]]
            w.writerow([e.iteration, *e.evaluation.csv_row(), ";".join(excluded)])
    doc = [{"iteration": e.iteration, "evaluation": e.evaluation.to_dict(), "state": e.state.to_json(model)}
           for e in entries]
    (out_dir / "pareto.json").write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


# --- subcommands ------------------------------------------------------------------

def cmd_fba(args) -> int:
    model, media = _load_inputs(args)
    medium = _select_medium(media, args.medium_id)
    state = AvailabilityState.all_available(model)
    if args.no_costs:
        state.eval_costs[:] = 1.0
    if args.alpha == "auto":
        alpha, _ = calibrate_alpha(model, medium, state, AlphaSchedule())
        print(f"calibrated alpha {alpha:g}")
    else:
        try:
            alpha = float(args.alpha)
        except ValueError as exc:
            raise InputError(f"--alpha must be a number or 'auto': {args.alpha!r}") from exc
    sol = solve_pfba(model, medium, state, alpha)
    print(f"medium {medium.id}  alpha {alpha:g}  biomass {sol.biomass:.6g}"
          + ("  RUNAWAY" if sol.runaway else ""))
    for rid, flux in sol.fluxes.items():
        if abs(flux) > 1e-9 or args.all:
            print(f"  {rid:<24s} {flux: .6g}")
    return EXIT_OK


def _prepare_out(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_gapfill(args) -> int:
    values = parse_config_text(Path(args.config).read_text()) if args.config else {}
    for key in ("regime", "iterations", "seed", "threads", "gme_rule", "checkpoint_every"):
        v = getattr(args, key, None)
        if v is not None:
            values[key] = str(v)
    values.setdefault("threads", str(default_threads()))
    config = build_search_config(values)
    model, media = _load_inputs(args)
    out = _prepare_out(args.out)
    ckpt_dir = out / "checkpoints"
    log_path = out / "run_log.jsonl"
    inputs = {"model": args.model, "media": args.media, "costs": args.costs,
              "taxonomy_db": args.taxonomy_db, "taxonomy_target": args.taxonomy_target}
    if args.resume:
        ckpts = sorted(ckpt_dir.glob("checkpoint_*.json"))
        if not ckpts:
            raise InputError(f"--resume: no checkpoint in {ckpt_dir}")
        search = load_checkpoint(model, media, config, ckpts[-1])
        # keep the log consistent with the checkpoint we resume from
        lines = log_path.read_text().splitlines()[: search.iteration] if log_path.exists() else []
        log_path.write_text("".join(line + "\n" for line in lines))
    else:
        manifest = {
            "tool_version": __version__,
            "config": config.snapshot(),
            "regime": config.regime,
            "seed": config.seed,
            "inputs": {k: {"path": str(v), "sha256": sha256(v)} for k, v in inputs.items() if v},
            "started": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        }
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        log_path.write_text("")
        search = MultiFactorialSearch(model, media, config)
        search.start()
        if search.prep.dropped:
            log.warning("dropped media without growth: %s", ", ".join(search.prep.dropped))
    result = search.run(log_path=log_path, checkpoint_dir=ckpt_dir)
    save_checkpoint(search, ckpt_dir / f"checkpoint_{search.iteration:06d}.json")
    write_pareto(out, result.archive, model)
    best = result.best
    predicted = {k: best.solutions[k].biomass for k in search.prep.targets.media_ids}
    write_predictions_csv(out / "predictions.csv", search.prep.targets, predicted, best.evaluation,
                          search.prep.c0, config.betas, config.gme_rule)
    write_evaluation(out / "metrics.csv", best.evaluation)
    (out / "best_state.json").write_text(json.dumps(best.state.to_json(model), indent=1) + "\n")
    manifest_path = out / "manifest.json"
    manifest = json.loads(manifest_path.read_text())
    manifest["finished"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    manifest["iterations_done"] = search.iteration
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    search.scorer.evaluator.close()
    print(f"best objective {best.objective:.6g}; archive {len(result.archive)} entries; output in {out}")
    print_evaluation(best.evaluation, True)
    return EXIT_OK


def _cmd_sequential(args, runner) -> int:
    model, media = _load_inputs(args)
    config = SequentialConfig(time_limit=args.time_limit, mip_gap=args.gap, node_limit=args.node_limit,
                              alpha=args.alpha, betas=REGIMES[args.regime], gme_rule=args.gme_rule)
    prep = preprocess(model, media)
    res = runner(model, media, config, prep)
    out = _prepare_out(args.out)
    predicted = {k: res.solutions[k].biomass for k in prep.targets.media_ids}
    write_predictions_csv(out / "predictions.csv", prep.targets, predicted, res.evaluation, prep.c0,
                          config.betas, config.gme_rule)
    extra = {"order": res.order, "selected_per_medium": res.selected_per_medium,
             "mip_status": {k: (v.value if v else None) for k, v in res.mip_status.items()},
             "truncated": res.truncated}
    write_evaluation(out / "metrics.csv", res.evaluation)
    write_evaluation(out / "metrics.json", res.evaluation, extra)
    (out / "state.json").write_text(json.dumps(res.state.to_json(model), indent=1) + "\n")
    print_evaluation(res.evaluation, True)
    if res.truncated:
        print("limit reached on: " + ", ".join(k for k, v in res.mip_status.items()
                                                if v is not None and v.value != "Optimal"))
        return EXIT_TRUNCATED
    return EXIT_OK


def cmd_seq_lp(args) -> int:
    return _cmd_sequential(args, run_lp_seq)


def cmd_seq_mip(args) -> int:
    return _cmd_sequential(args, run_mip_seq)


def cmd_taxcost(args) -> int:
    model = load_model(args.model)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", NoMatchingRank)
        costs = reaction_costs(load_db(args.db), load_target(args.target),
                               [r.id for r in model.reactions if not r.gene_indicated])
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    write_costs_csv(costs, args.out)
    print(f"wrote {len(costs)} costs to {args.out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    if args.predictions:
        rows, meta = read_predictions_csv(args.predictions, args.column)
        if args.media:
            wanted = [m.id for m in load_media(args.media)]
            have = {r["medium"] for r in rows}
            missing = [m for m in wanted if m not in have]
            if missing:
                raise InputError(f"predictions missing media: {', '.join(missing)}")
            rows = [r for r in rows if r["medium"] in set(wanted)]
        betas = REGIMES[args.regime] if args.regime else None
        ev, _ = evaluate_rows(rows, args.column, meta, args.reference_biomass, args.gme_rule, betas)
        print_evaluation(ev, "cost_raw" in meta)
    else:
        if not (args.model and args.media and args.state):
            raise InputError("evaluate needs --predictions, or --model, --media and --state")
        model, media = _load_inputs(args)
        state = AvailabilityState.from_json(model, json.loads(Path(args.state).read_text()))
        prep = preprocess(model, media)
        from .search import Scorer

        point = Scorer(model, prep, REGIMES[args.regime or "cost+error"], 1, None,
                       args.gme_rule or GME_SYMMETRIC).score(state)
        ev = point.evaluation
        print_evaluation(ev, True)
    if args.out:
        write_evaluation(args.out, ev)
    return EXIT_OK


def cmd_pareto_export(args) -> int:
    run_dir = Path(args.run_dir)
    manifest = json.loads((run_dir / "manifest.json").read_text())
    inputs = manifest["inputs"]
    ns = argparse.Namespace(model=inputs["model"]["path"], media=inputs["media"]["path"],
                            costs=inputs.get("costs", {}).get("path"),
                            taxonomy_db=inputs.get("taxonomy_db", {}).get("path"),
                            taxonomy_target=inputs.get("taxonomy_target", {}).get("path"))
    model, media = _load_inputs(ns)
    cfg = dict(manifest["config"])
    betas = Betas(**cfg.pop("betas"))
    schedule = cfg.pop("schedule")
    config = SearchConfig(betas=betas, schedule=AlphaSchedule(tuple(schedule["alpha_values"]),
                                                              schedule["stabilization_tol"]), **cfg)
    ckpts = sorted((run_dir / "checkpoints").glob("checkpoint_*.json"))
    if not ckpts:
        raise InputError(f"no checkpoints under {run_dir}")
    search = load_checkpoint(model, media, config, ckpts[-1])
    out = _prepare_out(args.out or run_dir)
    write_pareto(out, search.archive, model)
    print(f"exported {len(search.archive)} entries from {ckpts[-1].name} to {out}")
    return EXIT_OK


# --- parser -----------------------------------------------------------------------

def _add_cost_args(p):
    p.add_argument("--costs", help="CSV of reaction_id,cost overriding model costs")
    p.add_argument("--taxonomy-db", help="JSON-lines reference database for taxonomic costs")
    p.add_argument("--taxonomy-target", help="JSON taxonomy record of the target organism")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mfgapfill", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fba", help="cost-weighted pFBA on one medium")
    p.add_argument("--model", required=True)
    p.add_argument("--media", required=True)
    p.add_argument("--medium-id")
    p.add_argument("--alpha", default="auto", help="biomass weight, or 'auto' to calibrate")
    p.add_argument("--no-costs", action="store_true", help="unit costs for every reaction")
    p.add_argument("--all", action="store_true", help="also list zero fluxes")
    _add_cost_args(p)
    p.set_defaults(func=cmd_fba)

    p = sub.add_parser("gapfill", help="run the multi-factorial search")
    p.add_argument("--model", required=True)
    p.add_argument("--media", required=True)
    _add_cost_args(p)
    p.add_argument("--config", help="key=value file of search parameters")
    p.add_argument("--regime", choices=sorted(REGIMES))
    p.add_argument("--iterations", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--checkpoint-every", dest="checkpoint_every", type=int)
    p.add_argument("--gme-rule", dest="gme_rule", choices=[GME_SYMMETRIC, GME_FALSE_NEGATIVE])
    p.add_argument("--out", required=True)
    p.add_argument("--resume", action="store_true")
    p.set_defaults(func=cmd_gapfill)

    for name, func, helptext in (("seq-lp", cmd_seq_lp, "sequential pFBA baseline"),
                                 ("seq-mip", cmd_seq_mip, "sequential MILP baseline")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--model", required=True)
        p.add_argument("--media", required=True)
        _add_cost_args(p)
        p.add_argument("--out", required=True)
        p.add_argument("--regime", choices=sorted(REGIMES), default="cost+error")
        p.add_argument("--gme-rule", dest="gme_rule", default=GME_SYMMETRIC,
                       choices=[GME_SYMMETRIC, GME_FALSE_NEGATIVE])
        p.add_argument("--time-limit", type=float, default=3600.0)
        p.add_argument("--gap", type=float, default=0.01)
        p.add_argument("--node-limit", type=int, default=100_000)
        p.add_argument("--alpha", type=float, help="override the calibrated per-medium alpha")
        p.set_defaults(func=func)

    p = sub.add_parser("taxcost", help="taxonomic reaction costs")
    p.add_argument("--model", required=True)
    p.add_argument("--db", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_taxcost)

    p = sub.add_parser("evaluate", help="score predictions or a saved state")
    p.add_argument("--predictions", help="CSV with medium, growth_score, growth_class, target and predictions")
    p.add_argument("--column", default="predicted", help="prediction column in the CSV")
    p.add_argument("--reference-biomass", type=float,
                   help="regenerate targets from growth scores using this reference biomass")
    p.add_argument("--model")
    p.add_argument("--media")
    p.add_argument("--state", help="availability state JSON (with --model and --media)")
    _add_cost_args(p)
    p.add_argument("--regime", choices=sorted(REGIMES))
    p.add_argument("--gme-rule", dest="gme_rule", choices=[GME_SYMMETRIC, GME_FALSE_NEGATIVE])
    p.add_argument("--out", help="write metrics (.csv or .json)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("pareto-export", help="re-export the archive of a run from its last checkpoint")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_pareto_export)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    stage = args.command
    try:
        return args.func(args)
    except (InputError, ModelFormatError, FileNotFoundError, KeyError) as exc:
        print(f"error [{stage}: input]: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ValueError, json.JSONDecodeError) as exc:
        print(f"error [{stage}: input]: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SolveFailed, ModelDataError, AllMediaInfeasible) as exc:
        print(f"error [{stage}: solve]: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
