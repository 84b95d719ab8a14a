"""End-to-end experiment driver: corpus -> features -> model -> threshold ->
prediction -> evaluation -> prioritization.

Every randomized stage derives its seed from the single experiment seed, and
all artifacts are written atomically (temp file + rename), so re-running a
config reproduces each artifact byte for byte.
"""

from __future__ import annotations

import hashlib
import json
import os
import platform
import time
from dataclasses import dataclass, field
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
)
from .evaluation import KillMatrix, evaluate
from .features import (
    FeatureTable,
    ProjectIndex,
    extract_pairs,
    read_features_csv,
    table_from_vectors,
    write_features_csv,
)
from .models import ModelConfig, save_model, train
from .prioritization import (
    Strategy,
    apfd_difference,
    prioritize,
    write_prioritization_csv,
)
from .records import CoverageMap, DatasetSplit, Outcome, Scenario
from .thresholds import (
    FIXED_DEFAULT_THRESHOLD,
    classify,
    optimize_threshold,
)


class ExperimentError(Exception):
    pass


def derive_seed(seed: int, label: str) -> int:
    """Stable per-stage seed derivation from the experiment seed."""
    digest = hashlib.sha256(f"{seed}:{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") % (2**63 - 1)


def atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def atomic_write_json(path: Path, doc) -> None:
    atomic_write_text(path, json.dumps(doc, indent=2) + "\n")


def atomic_write_via(path, writer) -> None:
    """Run a file-producing callable against a temp path, then rename."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    writer(tmp)
    os.replace(tmp, path)


@dataclass
class CorpusPaths:
    name: str
    mutants: Path
    tests: Path
    coverage: Path
    killmap: Path
    sources: Path
    mutant_format: MutantLogFormat = MutantLogFormat.CANONICAL
    features: Path | None = None  # precomputed features.csv, skips extraction

    @classmethod
    def from_json_dict(cls, doc: dict) -> "CorpusPaths":
        if "root" in doc:
            root = Path(doc["root"])
            return cls(
                name=doc["name"],
                mutants=root / "mutants.csv",
                tests=root / "tests.csv",
                coverage=root / "coverage.csv",
                killmap=root / "killmap.csv",
                sources=root / "sources",
                features=Path(doc["features"]) if "features" in doc else None,
            )
        return cls(
            name=doc["name"],
            mutants=Path(doc["mutants"]),
            tests=Path(doc["tests"]),
            coverage=Path(doc["coverage"]),
            killmap=Path(doc["killmap"]),
            sources=Path(doc["sources"]),
            mutant_format=MutantLogFormat(doc.get("mutant_format", "canonical")),
            features=Path(doc["features"]) if "features" in doc else None,
        )


@dataclass
class PrioritizationConfig:
    repeats: int = 10
    n_faults: int = 10
    strategies: tuple[str, ...] = ("total", "additional")


@dataclass
class ExperimentConfig:
    scenario: Scenario
    corpora: dict[str, CorpusPaths]
    seed: int
    out_dir: Path
    model: ModelConfig = field(default_factory=ModelConfig)
    threshold_mode: str = "tuned"  # tuned | fixed
    fixed_threshold: float = FIXED_DEFAULT_THRESHOLD
    corpus: str | None = None  # same-version role
    old: str | None = None  # cross-version roles
    new: str | None = None
    train_corpora: tuple[str, ...] = ()  # cross-project roles
    target: str | None = None
    prioritization: PrioritizationConfig = field(default_factory=PrioritizationConfig)
    raw_doc: dict = field(default_factory=dict)

    @classmethod
    def from_json_dict(cls, doc: dict) -> "ExperimentConfig":
        scenario_name = doc["scenario"]
        if scenario_name == "cross_project":
            # Concrete one-to-one vs many-to-one is decided by source count.
            scenario = (
                Scenario.CROSS_PROJECT_ONE_TO_ONE
                if len(doc.get("train_corpora", [])) == 1
                else Scenario.CROSS_PROJECT_MANY_TO_ONE
            )
        else:
            scenario = Scenario(scenario_name)
        corpora = {
            c["name"]: CorpusPaths.from_json_dict(c) for c in doc["corpora"]
        }
        prio_doc = doc.get("prioritization", {})
        config = cls(
            scenario=scenario,
            corpora=corpora,
            seed=int(doc["seed"]),
            out_dir=Path(doc["out_dir"]),
            model=ModelConfig.from_json_dict(doc.get("model", {})),
            threshold_mode=doc.get("threshold_mode", "tuned"),
            fixed_threshold=float(doc.get("fixed_threshold", FIXED_DEFAULT_THRESHOLD)),
            corpus=doc.get("corpus"),
            old=doc.get("old"),
            new=doc.get("new"),
            train_corpora=tuple(doc.get("train_corpora", ())),
            target=doc.get("target"),
            prioritization=PrioritizationConfig(
                repeats=int(prio_doc.get("repeats", 10)),
                n_faults=int(prio_doc.get("n_faults", 10)),
                strategies=tuple(prio_doc.get("strategies", ("total", "additional"))),
            ),
            raw_doc=doc,
        )
        config._validate()
        return config

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_json_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def _validate(self) -> None:
        if self.threshold_mode not in ("tuned", "fixed"):
            raise ExperimentError(
                f"threshold_mode must be 'tuned' or 'fixed', got {self.threshold_mode!r}"
            )
        if self.scenario is Scenario.SAME_VERSION:
            roles = [self.corpus or next(iter(self.corpora), None)]
        elif self.scenario is Scenario.CROSS_VERSION:
            if not self.old or not self.new:
                raise ExperimentError("cross_version needs 'old' and 'new' corpora")
            roles = [self.old, self.new]
        else:
            if not self.train_corpora or not self.target:
                raise ExperimentError(
                    "cross_project needs 'train_corpora' and 'target'"
                )
            if self.target in self.train_corpora:
                raise ExperimentError("target corpus is among train_corpora")
            roles = list(self.train_corpora) + [self.target]
        for name in roles:
            if name not in self.corpora:
                raise ExperimentError(f"config references unknown corpus {name!r}")

    def config_hash(self) -> str:
        # out_dir is where artifacts land, not what they contain; identical
        # configs in different directories must produce identical artifacts.
        doc = {k: v for k, v in self.raw_doc.items() if k != "out_dir"}
        canonical = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass
class LoadedCorpus:
    name: str
    coverage: CoverageMap
    outcomes: dict[tuple[int, int], Outcome]
    table: FeatureTable


def load_corpus(paths: CorpusPaths, features_out: Path | None = None) -> LoadedCorpus:
    """Ingest one corpus and produce its covered-pair feature table."""
    mutants = ingest_mutant_log(paths.mutants, paths.mutant_format)
    tests = ingest_tests(paths.tests)
    coverage = ingest_coverage(paths.coverage)
    kills = ingest_kill_map(paths.killmap)
    pairs = build_pairs(mutants, tests, coverage, kills)
    outcomes = {(m, t): outcome for m, t, _h, outcome in pairs}
    if paths.features is not None:
        table = read_features_csv(paths.features, corpus=paths.name)
    else:
        sources = {
            p.name: p.read_text(encoding="utf-8")
            for p in sorted(Path(paths.sources).glob("*.java"))
        }
        if not sources:
            raise ExperimentError(f"{paths.sources}: no .java sources found")
        index = ProjectIndex(sources)
        rows = extract_pairs(mutants, tests, pairs, index)
        if features_out is not None:
            tmp = features_out.with_name(features_out.name + ".tmp")
            write_features_csv(tmp, rows)
            os.replace(tmp, features_out)
        table = table_from_vectors(rows, corpus=paths.name)
    return LoadedCorpus(name=paths.name, coverage=coverage, outcomes=outcomes, table=table)


def _build_split(config: ExperimentConfig, corpora: dict[str, LoadedCorpus]) -> DatasetSplit:
    split_seed = derive_seed(config.seed, "split")
    if config.scenario is Scenario.SAME_VERSION:
        name = config.corpus or next(iter(config.corpora))
        ids = {m for _c, m in corpora[name].table.mutant_keys}
        return split_same_version(ids, split_seed, corpus=name)
    if config.scenario is Scenario.CROSS_VERSION:
        old_ids = {m for _c, m in corpora[config.old].table.mutant_keys}
        new_ids = {m for _c, m in corpora[config.new].table.mutant_keys}
        return split_cross_version(
            old_ids, new_ids, split_seed, old_corpus=config.old, new_corpus=config.new
        )
    sources = {
        name: {m for _c, m in corpora[name].table.mutant_keys}
        for name in config.train_corpora
    }
    target_ids = {m for _c, m in corpora[config.target].table.mutant_keys}
    return split_cross_project(sources, config.target, target_ids, split_seed)


def _test_corpus_name(config: ExperimentConfig) -> str:
    if config.scenario is Scenario.SAME_VERSION:
        return config.corpus or next(iter(config.corpora))
    if config.scenario is Scenario.CROSS_VERSION:
        return config.new
    return config.target


def _derive_faults(
    actual: KillMatrix, n_faults: int, seed: int
) -> dict[int, set[int]]:
    """Sample killed mutants as fault proxies; detectors are their killing tests."""
    killers: dict[int, set[int]] = {}
    for (m, t), killed in actual.entries.items():
        if killed:
            killers.setdefault(m, set()).add(t)
    if not killers:
        raise ExperimentError(
            "cannot derive prioritization faults: no mutant is actually killed"
        )
    rng = np.random.default_rng(seed)
    candidates = sorted(killers)
    chosen = rng.choice(
        len(candidates), size=min(n_faults, len(candidates)), replace=False
    )
    return {candidates[i]: killers[candidates[i]] for i in sorted(chosen)}


def run_experiment(config: ExperimentConfig) -> dict:
    """Run the full pipeline; returns the manifest dict."""
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    timings: dict[str, float] = {}
    provenance = {"seed": config.seed, "config_hash": config.config_hash()}

    t0 = time.perf_counter()
    needed = set()
    if config.scenario is Scenario.SAME_VERSION:
        needed.add(config.corpus or next(iter(config.corpora)))
    elif config.scenario is Scenario.CROSS_VERSION:
        needed.update([config.old, config.new])
    else:
        needed.update(config.train_corpora)
        needed.add(config.target)
    corpora = {
        name: load_corpus(
            config.corpora[name], features_out=out_dir / f"features_{name}.csv"
        )
        for name in sorted(needed)
    }
    timings["load_and_extract_s"] = time.perf_counter() - t0

    split = _build_split(config, corpora)
    atomic_write_json(out_dir / "split.json", {**split.to_json_dict(), "provenance": provenance})

    all_tables = [corpora[name].table for name in sorted(corpora)]
    pooled = FeatureTable.concat(all_tables)
    train_table = pooled.restrict_to_mutants(split.train_mutants)
    val_table = pooled.restrict_to_mutants(split.val_mutants)
    test_table = pooled.restrict_to_mutants(split.test_mutants)
    if len(train_table) == 0 or len(test_table) == 0:
        raise ExperimentError("empty train or test pair set after the split")

    model_config = ModelConfig.from_json_dict(
        {**config.model.to_json_dict(), "seed": derive_seed(config.seed, "train")}
    )
    t0 = time.perf_counter()
    pair = train(train_table, model_config)
    timings["train_s"] = time.perf_counter() - t0
    save_model(pair, out_dir / "model.json.tmp")
    os.replace(out_dir / "model.json.tmp", out_dir / "model.json")

    if config.threshold_mode == "tuned":
        if len(val_table) == 0:
            raise ExperimentError("threshold tuning needs a non-empty validation set")
        val_scores = pair.predict_combined(val_table)
        report = optimize_threshold(val_scores, val_table.labels)
        threshold = report.selected
        threshold_doc = {"mode": "tuned", **report.to_json_dict()}
    else:
        threshold = config.fixed_threshold
        threshold_doc = {"mode": "fixed", "selected_threshold": threshold}
    threshold_doc["provenance"] = provenance
    atomic_write_json(out_dir / "threshold_report.json", threshold_doc)

    t0 = time.perf_counter()
    test_scores = pair.predict_combined(test_table)
    timings["predict_s"] = time.perf_counter() - t0
    timings["predicted_pairs"] = len(test_table)

    predicted_killed = classify(test_scores, threshold)
    pair_keys = [
        (m, int(t)) for (_c, m), t in zip(test_table.mutant_keys, test_table.test_ids)
    ]
    predicted = KillMatrix.from_predictions(pair_keys, predicted_killed)
    tmp = out_dir / "predicted_matrix.csv.tmp"
    predicted.write_csv(tmp, scores=test_scores)
    os.replace(tmp, out_dir / "predicted_matrix.csv")

    test_corpus = corpora[_test_corpus_name(config)]
    actual_outcomes = {
        key: test_corpus.outcomes.get(key, Outcome.LIVE) for key in predicted.entries
    }
    t0 = time.perf_counter()
    eval_report = evaluate(predicted, actual_outcomes, coverage=test_corpus.coverage)
    timings["evaluate_s"] = time.perf_counter() - t0
    atomic_write_json(
        out_dir / "eval_report.json",
        {**eval_report.to_json_dict(), "provenance": provenance},
    )
    tmp = out_dir / "eval_report.csv.tmp"
    eval_report.save_csv(tmp)
    os.replace(tmp, out_dir / "eval_report.csv")

    actual = KillMatrix.from_outcomes(actual_outcomes)
    fault_seed = derive_seed(config.seed, "faults")
    prio_seed = derive_seed(config.seed, "prioritize")
    faults = _derive_faults(actual, config.prioritization.n_faults, fault_seed)
    t0 = time.perf_counter()
    results = []
    for strategy_name in config.prioritization.strategies:
        strategy = Strategy(strategy_name)
        results.append(
            apfd_difference(
                predicted,
                actual,
                faults,
                strategy=strategy,
                repeats=config.prioritization.repeats,
                seed=prio_seed,
            )
        )
        suite = prioritize(predicted, strategy, prio_seed)
        atomic_write_json(
            out_dir / f"order_{strategy.value}.json", suite.to_json_dict()
        )
    timings["prioritize_s"] = time.perf_counter() - t0
    tmp = out_dir / "prioritization.csv.tmp"
    write_prioritization_csv(tmp, results)
    os.replace(tmp, out_dir / "prioritization.csv")

    artifact_names = [
        "split.json",
        "model.json",
        "threshold_report.json",
        "predicted_matrix.csv",
        "eval_report.json",
        "eval_report.csv",
        "prioritization.csv",
    ]
    artifact_hashes = {
        name: hashlib.sha256((out_dir / name).read_bytes()).hexdigest()
        for name in artifact_names
    }
    manifest = {
        "config": config.raw_doc,
        "config_hash": provenance["config_hash"],
        "seed": config.seed,
        "derived_seeds": {
            "split": derive_seed(config.seed, "split"),
            "train": derive_seed(config.seed, "train"),
            "faults": fault_seed,
            "prioritize": prio_seed,
        },
        "scenario": split.scenario.value,
        "threshold": threshold,
        "versions": {
            "killmat": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
        },
        "timings": timings,
        "artifacts": artifact_hashes,
    }
    atomic_write_json(out_dir / "manifest.json", manifest)
    return manifest
