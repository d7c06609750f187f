"""Command-line pipeline: synth, fit, explain, evaluate, experiment, report, predict.

Exit codes: 0 success, 2 validation failure (bad flags, schemas, files,
labels), 3 numerical failure. All output files are written atomically
and contain no timestamps, so identical inputs and seeds reproduce
byte-identical artifacts.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import itertools
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .data import (
    SPACE_LOGIT,
    SPACE_PROBABILITY,
    SPACES,
    Dataset,
    load_dataset,
    save_dataset,
    write_text_atomic,
)
from .errors import NumericalError, ValidationError
from .evaluation import METRICS, icace_error, macro_f1
from .explainers import (
    EffectEstimate,
    MCCEModel,
    build_label_index,
    explain_approx,
    explain_mcce,
    explain_slearner,
    fit_mcce,
    fit_slearner,
    global_report,
    load_model,
    predict_labels,
    read_effects,
    save_model,
    write_effects,
)
from .synthetic import (
    generate,
    load_ground_truth,
    load_synth_config,
    make_pairs,
    oracle_effect,
    save_ground_truth,
)

EXPLAIN_METHODS = ("mcce", "slearner", "approx", "oracle")
EXPERIMENT_METHODS = ("mcce", "slearner", "approx")


def _split_csv(value: str) -> list[str]:
    return [item.strip() for item in value.split(",") if item.strip()]


def _parse_hidden(value: str | None) -> frozenset[str]:
    return frozenset(_split_csv(value)) if value else frozenset()


def _parse_metrics(value: str) -> list[str]:
    metrics = _split_csv(value)
    if not metrics:
        raise ValidationError("at least one metric is required")
    for metric in metrics:
        if metric not in METRICS:
            raise ValidationError(f"unknown metric {metric!r}, expected one of {METRICS}")
    return metrics


def _parse_seeds(value: str) -> list[int]:
    try:
        seeds = [int(item) for item in _split_csv(value)]
    except ValueError:
        raise ValidationError(f"seeds must be a comma-separated list of integers, got {value!r}") from None
    if not seeds:
        raise ValidationError("at least one seed is required")
    return seeds


def _pair_seed(run_seed: int, original_id: str, attribute: str, to_level: str) -> int:
    """Stable per-pair seed so duplicate pair keys share one estimate."""
    digest = hashlib.sha256(f"{run_seed}|{original_id}|{attribute}|{to_level}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


# ---------------------------------------------------------------------------
# explain/evaluate plumbing shared by cmd_explain and cmd_experiment


def _estimate_effects(dataset: Dataset, method: str, model, run_seed: int, truth=None):
    """Estimates in pairs-file order, deduplicated by key; returns (effects, skipped)."""
    effects: list[EffectEstimate] = []
    seen: set[tuple] = set()
    skipped = 0
    index = build_label_index(dataset) if method == "approx" else None
    for pair in dataset.pairs:
        key = (pair.original_id, pair.attribute, pair.from_level, pair.to_level)
        if key in seen:
            continue
        if method in ("mcce", "slearner"):
            if pair.attribute in model.hidden_attributes:
                skipped += 1
                continue
            sample = dataset.by_id(pair.original_id)
            explain = explain_mcce if method == "mcce" else explain_slearner
            est = explain(model, sample, pair.attribute, pair.to_level)
        elif method == "approx":
            sample = dataset.by_id(pair.original_id)
            est = explain_approx(
                dataset,
                sample,
                pair.attribute,
                pair.to_level,
                seed=_pair_seed(run_seed, pair.original_id, pair.attribute, pair.to_level),
                index=index,
            )
            if est.from_level is None:
                est = replace(est, from_level=pair.from_level)
        elif method == "oracle":
            est = EffectEstimate(
                sample_id=pair.original_id,
                attribute=pair.attribute,
                from_level=pair.from_level,
                to_level=pair.to_level,
                effect=oracle_effect(truth, pair, dataset.space),
                method="oracle",
                space=dataset.space,
            )
        else:
            raise ValidationError(f"unknown method {method!r}")
        seen.add(key)
        effects.append(est)
    return effects, skipped


def _evaluable_pairs(dataset: Dataset, effects, hidden: frozenset[str]):
    """Pairs with estimates; hidden-attribute pairs without one are dropped."""
    keys = {(e.sample_id, e.attribute, e.from_level, e.to_level) for e in effects}
    evaluated = []
    dropped = 0
    for pair in dataset.pairs:
        if (pair.original_id, pair.attribute, pair.from_level, pair.to_level) in keys:
            evaluated.append(pair)
        elif pair.attribute in hidden:
            dropped += 1
        else:
            raise ValidationError(
                f"no effect estimate for pair ({pair.original_id!r}, {pair.attribute!r}, "
                f"{pair.from_level!r}, {pair.to_level!r}) and its attribute is not hidden"
            )
    return evaluated, dropped


def _write_reports(out_dir: Path, dataset, effects, pairs, metrics, metadata):
    reports = {}
    for metric in metrics:
        report = icace_error(effects, pairs, dataset, metric, metadata=dict(metadata))
        write_text_atomic(out_dir / f"report_{metric}.json", report.to_json())
        write_text_atomic(out_dir / f"report_{metric}.csv", report.to_csv())
        reports[metric] = report
    return reports


# ---------------------------------------------------------------------------
# commands


def cmd_synth(args) -> int:
    config, edits_per_sample = load_synth_config(args.config)
    dataset, truth = generate(config)
    pairs = []
    if edits_per_sample > 0:
        dataset, pairs = make_pairs(dataset, truth, config, edits_per_sample)
    out_dir = Path(args.out)
    save_dataset(dataset, out_dir)
    save_ground_truth(truth, out_dir / "ground_truth.json")
    print(
        f"synth: wrote {len(dataset.samples)} samples ({config.n} factual), "
        f"{len(pairs)} pairs to {out_dir}"
    )
    return 0


def cmd_fit(args) -> int:
    hidden = _parse_hidden(args.hidden)
    dataset = load_dataset(args.samples, args.pairs, args.schema, space=args.space).mask(hidden)
    if args.method == "mcce":
        model = fit_mcce(
            dataset, n_pseudo=args.j, ridge=args.ridge, target_kind=args.targets
        )
        d = model.diagnostics
        print(
            f"fit mcce: n_fit={d['n_fit']} k_vis={dataset.visible_width} "
            f"n_pseudo={model.n_pseudo} design_rank={d['design_rank']} "
            f"residual_sos={d['fit_residual_sos']:.6e} "
            f"orthogonality_max={d['orthogonality_max']:.6e}"
        )
    else:
        if args.targets == "gold":
            raise ValidationError("predictor mode (gold targets) is mcce-only")
        if args.j is not None:
            raise ValidationError("--j applies to the mcce method only")
        model = fit_slearner(dataset)
        print(
            f"fit slearner: n_fit={len(dataset.fit_samples())} "
            f"k_vis={dataset.visible_width} iterations={model.iterations} "
            f"final_loss={model.final_loss:.6e}"
        )
    save_model(model, args.out)
    print(f"fit: wrote model to {args.out}")
    return 0


def cmd_explain(args) -> int:
    dataset = load_dataset(args.samples, args.pairs, args.schema, space=args.space)
    method = args.method
    model = None
    truth = None
    if method in ("mcce", "slearner"):
        if not args.model:
            raise ValidationError(f"--model is required for method {method!r}")
        model = load_model(args.model)
        if model.kind != method:
            raise ValidationError(f"model file holds a {model.kind!r} model, requested {method!r}")
        if model.schema != dataset.schema:
            raise ValidationError("model and dataset schemas differ")
        model_space = model.space if method == "mcce" else model.input_space
        if model_space != dataset.space:
            raise ValidationError(
                f"model was fit in {model_space!r} space but the dataset was loaded "
                f"in {dataset.space!r} space"
            )
        hidden = model.hidden_attributes
    elif method == "approx":
        hidden = _parse_hidden(args.hidden)
        dataset = dataset.mask(hidden)
    else:  # oracle
        if not args.ground_truth:
            raise ValidationError("--ground-truth is required for method 'oracle'")
        truth = load_ground_truth(args.ground_truth)
        hidden = frozenset()

    effects, skipped = _estimate_effects(dataset, method, model, args.seed, truth)
    metadata = {
        "method": method,
        "space": dataset.space,
        "hidden": sorted(hidden),
        "seed": args.seed,
        "pairs_total": len(dataset.pairs),
        "pairs_skipped": skipped,
    }
    write_effects(args.out, effects, metadata)
    print(
        f"explain {method}: wrote {len(effects)} estimates to {args.out} "
        f"({skipped} hidden-attribute pairs skipped)"
    )
    return 0


def cmd_evaluate(args) -> int:
    metrics = _parse_metrics(args.metric)
    dataset = load_dataset(args.samples, args.pairs, args.schema, space=args.space)
    effects, meta = read_effects(args.effects)
    effects_space = meta.get("space")
    if effects_space is not None and effects_space != dataset.space:
        raise ValidationError(
            f"mixed-space comparison refused: estimates are in {effects_space!r} space, "
            f"dataset was loaded in {dataset.space!r} space"
        )
    hidden = frozenset(meta.get("hidden", ()))
    evaluated, dropped = _evaluable_pairs(dataset, effects, hidden)
    metadata = {
        "method": meta.get("method"),
        "hidden": sorted(hidden),
        "seed": meta.get("seed"),
        "pairs_skipped": dropped,
    }
    out_dir = Path(args.out)
    reports = _write_reports(out_dir, dataset, effects, evaluated, metrics, metadata)
    for metric in metrics:
        report = reports[metric]
        print(
            f"evaluate {metric}: macro_mean={report.macro_mean:.6e} "
            f"macro_std={report.macro_std:.6e} groups={len(report.groups)} "
            f"pairs={report.metadata['pairs_evaluated']} skipped={dropped}"
        )
    return 0


def _experiment_run(dataset, method, metrics, seed, run_dir, j, ridge):
    if method == "mcce":
        model = fit_mcce(dataset, n_pseudo=j, ridge=ridge)
        save_model(model, run_dir / "model.json")
    elif method == "slearner":
        model = fit_slearner(dataset)
        save_model(model, run_dir / "model.json")
    else:
        model = None
    effects, skipped = _estimate_effects(dataset, method, model, seed)
    hidden = dataset.hidden_attributes
    metadata = {
        "method": method,
        "space": dataset.space,
        "hidden": sorted(hidden),
        "seed": seed,
        "pairs_total": len(dataset.pairs),
        "pairs_skipped": skipped,
    }
    write_effects(run_dir / "effects.jsonl", effects, metadata)
    evaluated, dropped = _evaluable_pairs(dataset, effects, hidden)
    metadata["pairs_skipped"] = dropped
    return _write_reports(run_dir, dataset, effects, evaluated, metrics, metadata)


def cmd_experiment(args) -> int:
    methods = _split_csv(args.methods)
    for method in methods:
        if method not in EXPERIMENT_METHODS:
            raise ValidationError(
                f"unknown experiment method {method!r}, expected one of {EXPERIMENT_METHODS}"
            )
    if not methods:
        raise ValidationError("at least one method is required")
    metrics = _parse_metrics(args.metrics)
    seeds = _parse_seeds(args.seeds)
    if "slearner" in methods and args.space != SPACE_PROBABILITY:
        raise ValidationError(
            "slearner effects live in probability space; run the experiment with "
            "--space probability to keep methods comparable"
        )
    try:
        sizes = sorted({int(s) for s in _split_csv(args.mask_sizes)})
    except ValueError:
        raise ValidationError(f"mask sizes must be integers, got {args.mask_sizes!r}") from None
    dataset = load_dataset(args.samples, args.pairs, args.schema, space=args.space)
    names = dataset.schema.names
    if any(size < 1 or size >= len(names) + 1 for size in sizes):
        raise ValidationError(f"mask sizes must be in [1, {len(names)}], got {sizes}")
    masks = [combo for size in sizes for combo in itertools.combinations(names, size)]

    out_dir = Path(args.out)
    results: dict[tuple, float] = {}
    run_rows = []
    for mask in masks:
        masked = dataset.mask(mask)
        mask_dir = "+".join(mask)
        for method in methods:
            for seed in seeds:
                run_dir = out_dir / "runs" / method / mask_dir / f"seed{seed}"
                try:
                    reports = _experiment_run(
                        masked, method, metrics, seed, run_dir, args.j, args.ridge
                    )
                except (ValidationError, NumericalError) as exc:
                    raise type(exc)(
                        f"experiment run method={method} mask={mask_dir} seed={seed}: {exc}"
                    ) from exc
                for metric, report in reports.items():
                    results[(mask, method, metric, seed)] = report.macro_mean
                    run_rows.append(
                        {
                            "mask": list(mask),
                            "mask_size": len(mask),
                            "method": method,
                            "metric": metric,
                            "seed": seed,
                            "macro_mean": report.macro_mean,
                            "macro_std": report.macro_std,
                            "pairs_evaluated": report.metadata["pairs_evaluated"],
                            "pairs_skipped": report.metadata["pairs_skipped"],
                        }
                    )

    cells = []
    for size in sizes:
        size_masks = [m for m in masks if len(m) == size]
        for method in methods:
            for metric in metrics:
                all_values = [results[(m, method, metric, s)] for m in size_masks for s in seeds]
                by_mask = [
                    float(np.mean([results[(m, method, metric, s)] for s in seeds]))
                    for m in size_masks
                ]
                by_seed = [
                    float(np.mean([results[(m, method, metric, s)] for m in size_masks]))
                    for s in seeds
                ]
                cells.append(
                    {
                        "mask_size": size,
                        "method": method,
                        "metric": metric,
                        "mean": float(np.mean(all_values)),
                        "std_masks": float(np.std(by_mask)),
                        "std_seeds": float(np.std(by_seed)),
                        "n_masks": len(size_masks),
                        "n_seeds": len(seeds),
                    }
                )

    summary = {
        "space": args.space,
        "methods": methods,
        "metrics": metrics,
        "seeds": seeds,
        "masks": [list(m) for m in masks],
        "cells": cells,
        "runs": run_rows,
    }
    write_text_atomic(
        out_dir / "summary.json", json.dumps(summary, indent=2, sort_keys=True, allow_nan=False) + "\n"
    )
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        ["mask_size", "method", "metric", "mean", "std_masks", "std_seeds", "n_masks", "n_seeds"]
    )
    for cell in cells:
        writer.writerow(
            [
                cell["mask_size"],
                cell["method"],
                cell["metric"],
                repr(cell["mean"]),
                repr(cell["std_masks"]),
                repr(cell["std_seeds"]),
                cell["n_masks"],
                cell["n_seeds"],
            ]
        )
    write_text_atomic(out_dir / "summary.csv", buf.getvalue())

    print(f"experiment: {len(masks)} masks x {len(methods)} methods x {len(seeds)} seeds")
    for cell in cells:
        print(
            f"  mask_size={cell['mask_size']} method={cell['method']:<8} "
            f"metric={cell['metric']:<6} mean={cell['mean']:.6f} "
            f"std_masks={cell['std_masks']:.6f} std_seeds={cell['std_seeds']:.6f}"
        )
    print(f"experiment: wrote summary to {out_dir / 'summary.csv'}")
    return 0


def cmd_report(args) -> int:
    model = load_model(args.model)
    if not isinstance(model, MCCEModel):
        raise ValidationError("the coefficient report requires an mcce model")
    report = global_report(model, args.baseline_class)
    write_text_atomic(args.out, report.to_csv())
    print(
        f"report: wrote {len(report.contrasts)} rows "
        f"(baseline class {report.baseline_class}) to {args.out}"
    )
    return 0


def cmd_predict(args) -> int:
    model = load_model(args.model)
    if not isinstance(model, MCCEModel):
        raise ValidationError("prediction requires an mcce model")
    dataset = load_dataset(args.samples, None, args.schema)
    if not dataset.samples:
        raise ValidationError("cannot predict on an empty dataset")
    dataset = dataset.mask(model.hidden_attributes)
    predictions = predict_labels(model, dataset)
    lines = []
    for sample, label in zip(dataset.samples, predictions):
        lines.append(
            json.dumps(
                {"id": sample.id, "predicted": int(label), "gold": sample.gold_label},
                sort_keys=True,
            )
        )
    write_text_atomic(args.out, "\n".join(lines) + "\n")
    missing = sum(1 for s in dataset.samples if s.gold_label is None)
    if missing:
        print(f"predict: wrote {len(lines)} predictions to {args.out}")
        print(f"predict: score omitted, {missing} samples lack gold labels")
    else:
        score = macro_f1(predictions, dataset.gold_array(), model.n_outputs)
        print(f"predict: wrote {len(lines)} predictions to {args.out}")
        print(f"macro_f1 {score!r}")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mcce",
        description="Concept-effect estimation for black-box models with missing concept annotations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_dataset_flags(sp, pairs: bool):
        sp.add_argument("--schema", required=True, help="schema.json path")
        sp.add_argument("--samples", required=True, help="samples.jsonl path")
        if pairs:
            sp.add_argument("--pairs", required=True, help="pairs.jsonl path")

    def add_space_flag(sp, default=SPACE_LOGIT):
        sp.add_argument(
            "--space",
            choices=list(SPACES),
            default=default,
            help=f"output space for loading and comparison (default {default})",
        )

    sp = sub.add_parser("synth", help="generate a synthetic dataset with oracles")
    sp.add_argument("--config", required=True, help="synthesis config JSON")
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("fit", help="fit an explainer model")
    add_dataset_flags(sp, pairs=False)
    sp.add_argument("--pairs", default=None, help="optional pairs.jsonl (edited rows are excluded from fitting)")
    sp.add_argument("--method", choices=["mcce", "slearner"], default="mcce")
    sp.add_argument("--hidden", default=None, help="comma-separated attributes to mask")
    sp.add_argument("--j", type=int, default=None, help="pseudo-concept count (default: visible width)")
    sp.add_argument("--ridge", type=float, default=0.0)
    sp.add_argument("--targets", choices=["output", "gold"], default="output")
    add_space_flag(sp)
    sp.add_argument("--out", required=True, help="model JSON path")
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("explain", help="estimate the effect of every pair")
    add_dataset_flags(sp, pairs=True)
    sp.add_argument("--method", choices=list(EXPLAIN_METHODS), required=True)
    sp.add_argument("--model", default=None, help="model JSON (mcce/slearner)")
    sp.add_argument("--ground-truth", default=None, help="ground_truth.json (oracle)")
    sp.add_argument("--hidden", default=None, help="mask for the approx method")
    sp.add_argument("--seed", type=int, default=0, help="sampling seed (approx)")
    add_space_flag(sp)
    sp.add_argument("--out", required=True, help="effects JSONL path")
    sp.set_defaults(func=cmd_explain)

    sp = sub.add_parser("evaluate", help="score an effects file against paired data")
    add_dataset_flags(sp, pairs=True)
    sp.add_argument("--effects", required=True, help="effects JSONL from explain")
    sp.add_argument("--metric", default="l2,cosine,norm", help="comma-separated metrics")
    add_space_flag(sp)
    sp.add_argument("--out", required=True, help="output directory for report files")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("experiment", help="fit+explain+evaluate over hidden-attribute masks")
    add_dataset_flags(sp, pairs=True)
    sp.add_argument("--methods", default="mcce,slearner", help="comma-separated methods")
    sp.add_argument("--metrics", default="l2,cosine,norm", help="comma-separated metrics")
    sp.add_argument("--mask-sizes", default="1,2", help="hidden-set sizes to enumerate")
    sp.add_argument("--seeds", default="0", help="comma-separated sampling seeds")
    sp.add_argument("--j", type=int, default=None)
    sp.add_argument("--ridge", type=float, default=0.0)
    add_space_flag(sp, default=SPACE_PROBABILITY)
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_experiment)

    sp = sub.add_parser("report", help="coefficient contrasts against a baseline class")
    sp.add_argument("--model", required=True, help="mcce model JSON")
    sp.add_argument("--baseline-class", type=int, default=0)
    sp.add_argument("--out", required=True, help="CSV path")
    sp.set_defaults(func=cmd_report)

    sp = sub.add_parser("predict", help="predict gold labels with a predictor-mode model")
    sp.add_argument("--model", required=True, help="mcce model JSON fit with --targets gold")
    sp.add_argument("--schema", required=True)
    sp.add_argument("--samples", required=True)
    sp.add_argument("--out", required=True, help="predictions JSONL path")
    sp.set_defaults(func=cmd_predict)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3


def entry() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
