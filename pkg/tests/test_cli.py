"""Subcommand wiring, exit codes, and artifact round trips."""

import json

import pytest

from killmat.cli import main
from killmat.synth import SynthSpec, generate_synthetic_corpus


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    corpus = generate_synthetic_corpus(
        SynthSpec(n_mutants=400, n_tests=50), noise_rate=0.0, seed=11
    )
    corpus.write(root)
    return root


@pytest.fixture(scope="module")
def workdir(tmp_path_factory, corpus_dir):
    """Run the whole subcommand chain once; individual tests inspect artifacts."""
    out = tmp_path_factory.mktemp("work")
    c = corpus_dir

    def run(*argv):
        code = main([str(a) for a in argv])
        assert code == 0, f"command failed: {argv}"

    run(
        "extract", "--src", c / "sources", "--mutants", c / "mutants.csv",
        "--tests", c / "tests.csv", "--coverage", c / "coverage.csv",
        "--killmap", c / "killmap.csv", "--out", out / "features.csv",
    )
    run(
        "split", "--features", f"syn={out / 'features.csv'}",
        "--scenario", "same_version", "--seed", 7, "--out", out / "split.json",
    )
    run(
        "train", "--features", f"syn={out / 'features.csv'}",
        "--split", out / "split.json", "--out", out / "model.json",
        "--trees", 30, "--rounds", 30, "--min-leaf", 2,
        "--booster-min-leaf", 2, "--seed", 1,
    )
    run(
        "tune", "--model", out / "model.json",
        "--features", f"syn={out / 'features.csv'}",
        "--split", out / "split.json", "--out", out / "threshold.json",
    )
    run(
        "predict", "--model", out / "model.json",
        "--features", f"syn={out / 'features.csv'}",
        "--split", out / "split.json", "--subset", "test",
        "--threshold-report", out / "threshold.json",
        "--out", out / "predicted.csv",
    )
    run(
        "evaluate", "--predicted", out / "predicted.csv",
        "--features", f"syn={out / 'features.csv'}",
        "--coverage", c / "coverage.csv",
        "--out", out / "eval.json", "--out-csv", out / "eval.csv",
    )
    run("importance", "--model", out / "model.json", "--out", out / "importance.json")
    return out


class TestPipelineCommands:
    def test_features_file_shape(self, workdir):
        header = (workdir / "features.csv").read_text().splitlines()[0]
        assert header.count(",") == 24  # 2 ids + 21 features + outcome + reason

    def test_split_artifact(self, workdir):
        doc = json.loads((workdir / "split.json").read_text())
        assert doc["scenario"] == "same_version"
        assert doc["seed"] == 7
        n = (
            len(doc["train_mutants"]) + len(doc["val_mutants"]) + len(doc["test_mutants"])
        )
        assert n == 400

    def test_threshold_in_candidate_grid(self, workdir):
        doc = json.loads((workdir / "threshold.json").read_text())
        assert doc["selected_threshold"] in [round(0.05 * i, 2) for i in range(1, 11)]

    def test_predicted_matrix_columns(self, workdir):
        lines = (workdir / "predicted.csv").read_text().splitlines()
        assert lines[0] == "mutant_id,test_id,score,killed"
        assert len(lines) > 1

    def test_eval_report_perfect_on_clean_corpus(self, workdir):
        doc = json.loads((workdir / "eval.json").read_text())
        assert doc["pair_level"]["f1"] >= 0.95
        assert doc["ape"] <= 5.0

    def test_importance_names_diff_feature(self, workdir):
        doc = json.loads((workdir / "importance.json").read_text())
        top = max(
            doc["mean_normalized"]["booster"],
            key=doc["mean_normalized"]["booster"].get,
        )
        assert top == "statement_diff"


class TestIngestCommand:
    def test_normalizes_and_reports(self, corpus_dir, tmp_path, capsys):
        code = main(
            [
                "ingest", "--mutants", str(corpus_dir / "mutants.csv"),
                "--tests", str(corpus_dir / "tests.csv"),
                "--coverage", str(corpus_dir / "coverage.csv"),
                "--killmap", str(corpus_dir / "killmap.csv"),
                "--out-dir", str(tmp_path / "norm"),
            ]
        )
        assert code == 0
        out = capsys.readouterr().out
        assert "covered pairs" in out
        for name in ("mutants.csv", "tests.csv", "coverage.csv", "killmap.csv"):
            assert (tmp_path / "norm" / name).exists()

    def test_major_log_format(self, tmp_path):
        log = tmp_path / "mutants.log"
        log.write_text(
            "1:ROR:<=:>=:org.x.C@m(int):4:a <= b |==> a >= b\n"
            "2:LVR:0:1:org.x.C:2:0 |==> 1\n"
        )
        (tmp_path / "tests.csv").write_text(
            'test_id,qualified_name,source_text\n1,T#t,"void t() {}"\n'
        )
        (tmp_path / "coverage.csv").write_text(
            "mutant_id,test_id,hits\n1,1,2\n2,1,1\n"
        )
        code = main(
            [
                "ingest", "--mutants", str(log), "--format", "major",
                "--tests", str(tmp_path / "tests.csv"),
                "--coverage", str(tmp_path / "coverage.csv"),
                "--out-dir", str(tmp_path / "norm"),
            ]
        )
        assert code == 0
        normalized = (tmp_path / "norm" / "mutants.csv").read_text()
        assert "1,ROR,org.x.C,m(int),4,a <= b,a >= b" in normalized


class TestPrioritizeCommand:
    def test_prioritize_on_predictions(self, workdir, tmp_path):
        predicted = workdir / "predicted.csv"
        # Build an actual matrix and a faults file from the predictions.
        import csv

        rows = list(csv.DictReader(open(predicted)))
        actual_path = tmp_path / "actual.csv"
        with open(actual_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["mutant_id", "test_id", "killed"])
            for row in rows:
                writer.writerow([row["mutant_id"], row["test_id"], row["killed"]])
        killed_rows = [r for r in rows if r["killed"] == "1"]
        faults_path = tmp_path / "faults.csv"
        with open(faults_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["fault_id", "test_id"])
            for idx, row in enumerate(killed_rows[:5], start=1):
                writer.writerow([idx, row["test_id"]])
        out = tmp_path / "prioritization.csv"
        code = main(
            [
                "prioritize", "--predicted", str(predicted), "--actual", str(actual_path),
                "--faults", str(faults_path), "--repeats", "4", "--seed", "3",
                "--out", str(out),
            ]
        )
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "repeat,strategy,apfd_predicted,apfd_actual,abs_diff"
        assert len(lines) == 1 + 4 * 2  # two strategies x four repeats
        # Identical matrices -> all differences exactly zero.
        assert all(line.rsplit(",", 1)[1] == "0.0" for line in lines[1:])
        assert (tmp_path / "order_total.json").exists()
        assert (tmp_path / "order_additional.json").exists()


class TestCrossVersionCli:
    def test_subcommand_chain_across_two_corpora(self, tmp_path_factory):
        out = tmp_path_factory.mktemp("cross")
        features = {}
        for name, seed in (("old", 21), ("new", 22)):
            root = tmp_path_factory.mktemp(f"corpus_{name}")
            generate_synthetic_corpus(
                SynthSpec(n_mutants=300, n_tests=40), noise_rate=0.0, seed=seed
            ).write(root)
            feat = out / f"features_{name}.csv"
            code = main(
                [
                    "extract", "--src", str(root / "sources"),
                    "--mutants", str(root / "mutants.csv"),
                    "--tests", str(root / "tests.csv"),
                    "--coverage", str(root / "coverage.csv"),
                    "--killmap", str(root / "killmap.csv"),
                    "--out", str(feat),
                ]
            )
            assert code == 0
            features[name] = feat
        assert (
            main(
                [
                    "split",
                    "--features", f"old={features['old']}",
                    "--features", f"new={features['new']}",
                    "--scenario", "cross_version", "--old", "old", "--new", "new",
                    "--seed", "3", "--out", str(out / "split.json"),
                ]
            )
            == 0
        )
        split = json.loads((out / "split.json").read_text())
        assert {c for c, _m in split["test_mutants"]} == {"new"}
        assert (
            main(
                [
                    "train",
                    "--features", f"old={features['old']}",
                    "--features", f"new={features['new']}",
                    "--split", str(out / "split.json"),
                    "--out", str(out / "model.json"),
                    "--trees", "20", "--rounds", "20",
                    "--min-leaf", "2", "--booster-min-leaf", "2", "--seed", "1",
                ]
            )
            == 0
        )
        assert (
            main(
                [
                    "predict", "--model", str(out / "model.json"),
                    "--features", f"old={features['old']}",
                    "--features", f"new={features['new']}",
                    "--split", str(out / "split.json"), "--subset", "test",
                    "--threshold", "0.35", "--out", str(out / "predicted.csv"),
                ]
            )
            == 0
        )
        assert (
            main(
                [
                    "evaluate", "--predicted", str(out / "predicted.csv"),
                    "--features", f"new={features['new']}",
                    "--out", str(out / "eval.json"),
                ]
            )
            == 0
        )
        doc = json.loads((out / "eval.json").read_text())
        assert doc["pair_level"]["f1"] >= 0.9


class TestExperimentCommand:
    def test_experiment_and_determinism(self, corpus_dir, tmp_path):
        config = {
            "scenario": "same_version",
            "seed": 5,
            "out_dir": str(tmp_path / "runA"),
            "corpora": [{"name": "syn", "root": str(corpus_dir)}],
            "corpus": "syn",
            "model": {
                "forest_trees": 25, "booster_rounds": 25,
                "forest_min_leaf": 2, "booster_min_leaf": 2,
            },
            "threshold_mode": "tuned",
            "prioritization": {"repeats": 3, "n_faults": 5},
        }
        config_path = tmp_path / "config.json"
        config_path.write_text(json.dumps(config))
        assert main(["experiment", "--config", str(config_path)]) == 0
        assert main(
            ["experiment", "--config", str(config_path), "--out-dir", str(tmp_path / "runB")]
        ) == 0
        for name in ("eval_report.json", "prioritization.csv", "model.json"):
            a = (tmp_path / "runA" / name).read_bytes()
            b = (tmp_path / "runB" / name).read_bytes()
            assert a == b, f"{name} differs between identical runs"

    def test_fixed_mode_skips_tuning(self, corpus_dir, tmp_path):
        config = {
            "scenario": "same_version",
            "seed": 5,
            "out_dir": str(tmp_path / "fixed"),
            "corpora": [{"name": "syn", "root": str(corpus_dir)}],
            "corpus": "syn",
            "model": {
                "forest_trees": 10, "booster_rounds": 10,
                "forest_min_leaf": 2, "booster_min_leaf": 2,
            },
            "threshold_mode": "fixed",
            "prioritization": {"repeats": 2, "n_faults": 3},
        }
        config_path = tmp_path / "config.json"
        config_path.write_text(json.dumps(config))
        assert main(["experiment", "--config", str(config_path)]) == 0
        doc = json.loads((tmp_path / "fixed" / "threshold_report.json").read_text())
        assert doc["mode"] == "fixed"
        assert doc["selected_threshold"] == 0.35
        assert "candidates" not in doc  # tuning really was skipped

    def test_cross_version_with_one_corpus_is_config_error(self, corpus_dir, tmp_path):
        config = {
            "scenario": "cross_version",
            "seed": 1,
            "out_dir": str(tmp_path / "x"),
            "corpora": [{"name": "syn", "root": str(corpus_dir)}],
            "old": "syn",
        }
        config_path = tmp_path / "config.json"
        config_path.write_text(json.dumps(config))
        assert main(["experiment", "--config", str(config_path)]) == 1


class TestExitCodes:
    def test_usage_error_is_2(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["train"])  # missing required flags
        assert exc.value.code == 2

    def test_missing_input_file_is_usage_error_2(self, tmp_path, capsys):
        code = main(
            [
                "predict", "--model", str(tmp_path / "absent.json"),
                "--features", f"x={tmp_path / 'absent.csv'}",
                "--out", str(tmp_path / "out.csv"),
            ]
        )
        assert code == 2
        assert "usage error:" in capsys.readouterr().err

    def test_pipeline_error_is_1(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        code = main(
            [
                "predict", "--model", str(bad),
                "--features", f"x={tmp_path / 'absent.csv'}",
                "--out", str(tmp_path / "out.csv"),
            ]
        )
        assert code == 1
        assert "error:" in capsys.readouterr().err

    def test_generate_rejects_bad_noise(self, tmp_path, capsys):
        code = main(
            ["generate", "--out-dir", str(tmp_path), "--mutants", "50",
             "--tests", "10", "--noise", "0.9"]
        )
        assert code == 1
