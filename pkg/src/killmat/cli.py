"""Multi-subcommand command line wiring the pipeline stages together.

Exit codes: 0 on success, 1 on pipeline errors (with a structured message on
stderr), 2 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .corpus import (
    MutantLogFormat,
    build_pairs,
    ingest_coverage,
    ingest_kill_map,
    ingest_mutant_log,
    ingest_tests,
    split_cross_project,
    split_cross_version,
    split_same_version,
    write_coverage_csv,
    write_killmap_csv,
    write_mutants_csv,
    write_tests_csv,
)
from .evaluation import EvaluationError, KillMatrix, evaluate
from .experiment import (
    ExperimentConfig,
    ExperimentError,
    atomic_write_json,
    atomic_write_via,
    run_experiment,
)
from .features import (
    ExtractionError,
    FeatureTable,
    ProjectIndex,
    extract_pairs,
    read_features_csv,
    write_features_csv,
)
from .javasrc import JavaParseError
from .models import (
    ModelConfig,
    ModelError,
    aggregate_importances,
    feature_importance,
    load_model,
    save_model,
    train,
)
from .prioritization import (
    PrioritizationError,
    Strategy,
    apfd_difference,
    prioritize,
    write_prioritization_csv,
)
from .records import CorpusError, DatasetSplit, Outcome
from .synth import LabelRule, SynthSpec, generate_synthetic_corpus
from .thresholds import (
    FIXED_DEFAULT_THRESHOLD,
    ThresholdError,
    classify,
    optimize_threshold,
)

PIPELINE_ERRORS = (
    CorpusError,
    ExtractionError,
    JavaParseError,
    ModelError,
    ThresholdError,
    EvaluationError,
    PrioritizationError,
    ExperimentError,
    OSError,
    ValueError,
)


def _default_out_dir() -> str:
    return os.environ.get("KILLMAT_OUT_DIR", ".")


def _named_features(specs: list[str]) -> FeatureTable:
    """Load repeated NAME=PATH feature files into one tagged table."""
    tables = []
    for spec in specs:
        if "=" in spec:
            name, path = spec.split("=", 1)
        else:
            name, path = Path(spec).stem, spec
        tables.append(read_features_csv(path, corpus=name))
    return FeatureTable.concat(tables)


def _load_split(path: str) -> DatasetSplit:
    return DatasetSplit.from_json_dict(json.loads(Path(path).read_text("utf-8")))


def _ingest_inputs(args) -> tuple:
    mutants = ingest_mutant_log(args.mutants, MutantLogFormat(args.format))
    tests = ingest_tests(args.tests)
    coverage = ingest_coverage(args.coverage)
    kills = ingest_kill_map(args.killmap) if args.killmap else {}
    return mutants, tests, coverage, kills


def cmd_generate(args) -> int:
    rule = None
    if args.rule:
        rule = LabelRule(json.loads(Path(args.rule).read_text("utf-8")))
    spec = SynthSpec(
        n_mutants=args.mutants,
        n_tests=args.tests,
        max_covering_tests=args.max_covering_tests,
    )
    corpus = generate_synthetic_corpus(
        spec, rule=rule, noise_rate=args.noise, seed=args.seed
    )
    corpus.write(args.out_dir)
    print(
        f"generated {len(corpus.mutants)} mutants, {len(corpus.tests)} tests, "
        f"{len(corpus.coverage)} covered pairs -> {args.out_dir}"
    )
    return 0


def cmd_ingest(args) -> int:
    mutants, tests, coverage, kills = _ingest_inputs(args)
    pairs = build_pairs(mutants, tests, coverage, kills)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_mutants_csv(out / "mutants.csv", mutants)
    write_tests_csv(out / "tests.csv", tests)
    write_coverage_csv(out / "coverage.csv", coverage)
    write_killmap_csv(out / "killmap.csv", kills)
    killed = sum(1 for _m, _t, _h, o in pairs if o.killed)
    print(
        f"ingested {len(mutants)} mutants, {len(tests)} tests, "
        f"{len(pairs)} covered pairs ({killed} killed) -> {out}"
    )
    return 0


def cmd_extract(args) -> int:
    mutants, tests, coverage, kills = _ingest_inputs(args)
    pairs = build_pairs(mutants, tests, coverage, kills)
    sources = {
        p.name: p.read_text(encoding="utf-8")
        for p in sorted(Path(args.src).glob("*.java"))
    }
    if not sources:
        raise ExtractionError(f"{args.src}: no .java sources found")
    index = ProjectIndex(sources)
    rows = extract_pairs(mutants, tests, pairs, index)
    atomic_write_via(args.out, lambda tmp: write_features_csv(tmp, rows))
    print(f"extracted {len(rows)} pair vectors -> {args.out}")
    return 0


def cmd_split(args) -> int:
    tables: dict[str, FeatureTable] = {}
    for spec in args.features:
        if "=" in spec:
            name, path = spec.split("=", 1)
        else:
            name, path = Path(spec).stem, spec
        tables[name] = read_features_csv(path, corpus=name)

    def ids(name: str) -> set[int]:
        return {m for _c, m in tables[name].mutant_keys}

    if args.scenario == "same_version":
        if len(tables) != 1:
            raise CorpusError("same_version expects exactly one --features file")
        name = next(iter(tables))
        split = split_same_version(ids(name), args.seed, corpus=name)
    elif args.scenario == "cross_version":
        if not args.old or not args.new:
            raise CorpusError("cross_version needs --old and --new corpus names")
        split = split_cross_version(
            ids(args.old), ids(args.new), args.seed,
            old_corpus=args.old, new_corpus=args.new,
        )
    else:
        if not args.target:
            raise CorpusError("cross_project needs --target")
        sources = {n: ids(n) for n in tables if n != args.target}
        split = split_cross_project(sources, args.target, ids(args.target), args.seed)
    atomic_write_json(Path(args.out), split.to_json_dict())
    print(
        f"{split.scenario.value}: {len(split.train_mutants)} train / "
        f"{len(split.val_mutants)} val / {len(split.test_mutants)} test mutants "
        f"-> {args.out}"
    )
    return 0


def _model_config_from_args(args) -> ModelConfig:
    doc = {}
    mapping = {
        "trees": "forest_trees",
        "max_depth": "forest_max_depth",
        "min_leaf": "forest_min_leaf",
        "features_per_split": "forest_features_per_split",
        "rounds": "booster_rounds",
        "learning_rate": "booster_learning_rate",
        "max_leaves": "booster_max_leaves",
        "booster_min_leaf": "booster_min_leaf",
        "l2": "booster_l2",
        "max_bins": "max_bins",
        "seed": "seed",
    }
    for arg_name, field_name in mapping.items():
        value = getattr(args, arg_name, None)
        if value is not None:
            doc[field_name] = value
    return ModelConfig.from_json_dict(doc)


def cmd_train(args) -> int:
    table = _named_features(args.features)
    if args.split:
        split = _load_split(args.split)
        table = table.restrict_to_mutants(split.train_mutants)
    pair = train(table, _model_config_from_args(args))
    save_model(pair, args.out)
    print(f"trained on {len(table)} pairs -> {args.out}")
    return 0


def cmd_tune(args) -> int:
    pair = load_model(args.model)
    table = _named_features(args.features)
    if args.split:
        split = _load_split(args.split)
        table = table.restrict_to_mutants(split.val_mutants)
    scores = pair.predict_combined(table)
    report = optimize_threshold(scores, table.labels)
    atomic_write_json(Path(args.out), {"mode": "tuned", **report.to_json_dict()})
    print(f"selected threshold {report.selected} on {len(table)} validation pairs")
    return 0


def cmd_predict(args) -> int:
    pair = load_model(args.model)
    table = _named_features(args.features)
    if args.split:
        split = _load_split(args.split)
        subset = {
            "train": split.train_mutants,
            "val": split.val_mutants,
            "test": split.test_mutants,
        }[args.subset]
        table = table.restrict_to_mutants(subset)
    if args.threshold_report:
        report = json.loads(Path(args.threshold_report).read_text("utf-8"))
        threshold = float(report["selected_threshold"])
    else:
        threshold = args.threshold
    started = time.perf_counter()
    scores = pair.predict_combined(table)
    elapsed = time.perf_counter() - started
    killed = classify(scores, threshold)
    keys = [(m, int(t)) for (_c, m), t in zip(table.mutant_keys, table.test_ids)]
    matrix = KillMatrix.from_predictions(keys, killed)
    atomic_write_via(args.out, lambda tmp: matrix.write_csv(tmp, scores=scores))
    print(
        f"predicted {len(table)} pairs in {elapsed:.3f}s "
        f"(threshold {threshold}) -> {args.out}",
        file=sys.stderr,
    )
    return 0


def cmd_evaluate(args) -> int:
    predicted = KillMatrix.read_csv(args.predicted)
    table = _named_features(args.features)
    outcomes = {}
    for (_c, m), t, killed, reason in zip(
        table.mutant_keys, table.test_ids, table.labels, table.reasons
    ):
        key = (m, int(t))
        if key in predicted.entries:
            outcomes[key] = Outcome(reason) if killed else Outcome.LIVE
    missing = set(predicted.entries) - set(outcomes)
    if missing:
        raise EvaluationError(
            f"{len(missing)} predicted pairs have no ground-truth features row"
        )
    coverage = ingest_coverage(args.coverage) if args.coverage else None
    report = evaluate(predicted, outcomes, coverage=coverage)
    atomic_write_json(Path(args.out), report.to_json_dict())
    if args.out_csv:
        atomic_write_via(args.out_csv, report.save_csv)
    print(
        f"pair F1 {report.pair_metrics['f1']:.4f} | "
        f"mutant F1 {report.mutant_metrics['f1']:.4f} | APE {report.ape:.2f}"
    )
    return 0


def cmd_importance(args) -> int:
    reports = [feature_importance(load_model(path)) for path in args.model]
    aggregated = aggregate_importances(reports)
    doc = {
        "per_model_file": [r.to_json_dict() for r in reports],
        "mean_normalized": aggregated,
    }
    atomic_write_json(Path(args.out), doc)
    for model_name, values in aggregated.items():
        top = max(values, key=values.get)
        print(f"{model_name}: top feature {top} ({values[top]:.3f})")
    return 0


def _read_faults(path: str) -> dict[int, set[int]]:
    import csv as _csv

    faults: dict[int, set[int]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = _csv.reader(fh)
        header = next(reader, None)
        if header != ["fault_id", "test_id"]:
            raise CorpusError(f"{path}: expected header fault_id,test_id")
        for row in reader:
            if row:
                faults.setdefault(int(row[0]), set()).add(int(row[1]))
    return faults


def cmd_prioritize(args) -> int:
    predicted = KillMatrix.read_csv(args.predicted)
    actual = KillMatrix.read_csv(args.actual)
    faults = _read_faults(args.faults)
    results = []
    out_dir = Path(args.out).parent
    for name in args.strategies.split(","):
        strategy = Strategy(name.strip())
        results.append(
            apfd_difference(
                predicted, actual, faults,
                strategy=strategy, repeats=args.repeats, seed=args.seed,
            )
        )
        suite = prioritize(predicted, strategy, args.seed)
        atomic_write_json(
            out_dir / f"order_{strategy.value}.json", suite.to_json_dict()
        )
    atomic_write_via(args.out, lambda tmp: write_prioritization_csv(tmp, results))
    for result in results:
        print(
            f"{result.strategy.value}: mean |APFD_pred - APFD_actual| "
            f"= {result.mean_abs_diff:.4f}"
        )
    return 0


def cmd_experiment(args) -> int:
    doc = json.loads(Path(args.config).read_text("utf-8"))
    if isinstance(doc.get("config"), dict) and "corpora" in doc["config"]:
        doc = doc["config"]  # a manifest.json re-runs its own experiment
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.out_dir is not None:
        doc["out_dir"] = args.out_dir
    if args.threshold_mode is not None:
        doc["threshold_mode"] = args.threshold_mode
    config = ExperimentConfig.from_json_dict(doc)
    manifest = run_experiment(config)
    timings = manifest["timings"]
    print(
        f"experiment complete -> {config.out_dir} "
        f"(predicted {timings['predicted_pairs']} pairs "
        f"in {timings['predict_s']:.3f}s)"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="killmat",
        description="Fine-grained predictive mutation testing toolkit",
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument(
        "--threads",
        type=int,
        default=1,
        help="cap on worker threads; results do not depend on it",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a synthetic corpus")
    p.add_argument("--out-dir", default=_default_out_dir())
    p.add_argument("--mutants", type=int, default=2000)
    p.add_argument("--tests", type=int, default=100)
    p.add_argument("--max-covering-tests", type=int, default=3)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rule", help="JSON file with a label rule descriptor")
    p.set_defaults(func=cmd_generate)

    def add_corpus_inputs(p):
        p.add_argument("--mutants", required=True)
        p.add_argument("--format", choices=["canonical", "major"], default="canonical")
        p.add_argument("--tests", required=True)
        p.add_argument("--coverage", required=True)
        p.add_argument("--killmap")

    p = sub.add_parser("ingest", help="validate and normalize corpus files")
    add_corpus_inputs(p)
    p.add_argument("--out-dir", default=_default_out_dir())
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("extract", help="compute the 21-feature vectors")
    add_corpus_inputs(p)
    p.add_argument("--src", required=True, help="directory of .java sources")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("split", help="build a leakage-free dataset split")
    p.add_argument(
        "--features", action="append", required=True,
        help="NAME=features.csv (repeatable)",
    )
    p.add_argument(
        "--scenario", required=True,
        choices=["same_version", "cross_version", "cross_project"],
    )
    p.add_argument("--old", help="old-version corpus name (cross_version)")
    p.add_argument("--new", help="new-version corpus name (cross_version)")
    p.add_argument("--target", help="target corpus name (cross_project)")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train the forest + booster pair")
    p.add_argument("--features", action="append", required=True)
    p.add_argument("--split")
    p.add_argument("--out", required=True)
    p.add_argument("--trees", type=int)
    p.add_argument("--max-depth", dest="max_depth", type=int)
    p.add_argument("--min-leaf", dest="min_leaf", type=int)
    p.add_argument("--features-per-split", dest="features_per_split", type=int)
    p.add_argument("--rounds", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--max-leaves", dest="max_leaves", type=int)
    p.add_argument("--booster-min-leaf", dest="booster_min_leaf", type=int)
    p.add_argument("--l2", type=float)
    p.add_argument("--max-bins", dest="max_bins", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("tune", help="select the decision threshold on validation pairs")
    p.add_argument("--model", required=True)
    p.add_argument("--features", action="append", required=True)
    p.add_argument("--split")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("predict", help="emit a predicted kill matrix")
    p.add_argument("--model", required=True)
    p.add_argument("--features", action="append", required=True)
    p.add_argument("--split")
    p.add_argument("--subset", choices=["train", "val", "test"], default="test")
    p.add_argument("--threshold", type=float, default=FIXED_DEFAULT_THRESHOLD)
    p.add_argument("--threshold-report")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score a predicted matrix against ground truth")
    p.add_argument("--predicted", required=True)
    p.add_argument("--features", action="append", required=True)
    p.add_argument("--coverage")
    p.add_argument("--out", required=True)
    p.add_argument("--out-csv")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("importance", help="report normalized feature importances")
    p.add_argument("--model", action="append", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_importance)

    p = sub.add_parser("prioritize", help="prioritize tests and score APFD differences")
    p.add_argument("--predicted", required=True)
    p.add_argument("--actual", required=True)
    p.add_argument("--faults", required=True)
    p.add_argument("--strategies", default="total,additional")
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_prioritize)

    p = sub.add_parser("experiment", help="run a full configured experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir")
    p.add_argument("--threshold-mode", choices=["tuned", "fixed"])
    p.set_defaults(func=cmd_experiment)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads < 1:
        parser.error("--threads must be at least 1")
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        # A referenced input that does not exist is a usage error, like a
        # missing flag.
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except PIPELINE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
