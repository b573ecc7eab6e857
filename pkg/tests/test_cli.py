import csv
import json
import subprocess
import sys

import pytest

from rankcons.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_OK, main
from rankcons.data_io import load_dataset, load_experiment
from rankcons.oracles.cached import dump_cached
from rankcons.oracles.synthetic import SyntheticOracle, SyntheticOracleConfig
from rankcons.selection import select_allpair


def run(tmp_path, *argv):
    return main(["--out-dir", str(tmp_path), *argv])


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(line for line in fh if not line.startswith("#")))


@pytest.fixture
def dataset(tmp_path):
    assert run(tmp_path, "--seed", "3", "simulate", "--queries", "6", "--list-size", "15") == EXIT_OK
    return tmp_path / "dataset.json"


@pytest.fixture
def experiment(tmp_path, dataset):
    rc = run(
        tmp_path, "--seed", "3", "consolidate", "--dataset", str(dataset),
        "--sigma", "0.15", "--flip", "0.15", "--method", "allpair,slidewin,topall", "--k", "5",
    )
    assert rc == EXIT_OK
    return tmp_path / "experiment.json"


class TestSimulate:
    def test_deterministic(self, tmp_path):
        for name in ("a.json", "b.json"):
            assert run(tmp_path, "--seed", "9", "simulate", "--queries", "4", "--list-size", "7", "--output", name) == 0
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
        ds = load_dataset(tmp_path / "a.json")
        assert len(ds) == 4 and all(len(cl) == 7 for cl in ds)

    @pytest.mark.filterwarnings("ignore:constant predictions")
    def test_single_doc_lists(self, tmp_path):
        assert run(tmp_path, "simulate", "--queries", "3", "--list-size", "1") == EXIT_OK
        rc = run(tmp_path, "consolidate", "--dataset", str(tmp_path / "dataset.json"), "--method", "allpair,slidewin,topall")
        assert rc == EXIT_OK
        rows = read_csv(tmp_path / "report.csv")
        assert rows and all(float(r["ndcg@10"]) == 1.0 for r in rows)

    def test_invalid_alphabet(self, tmp_path):
        assert run(tmp_path, "simulate", "--grades", "2") == EXIT_FAIL


class TestConsolidate:
    def test_noiseless_allpair(self, tmp_path, dataset):
        assert run(tmp_path, "consolidate", "--dataset", str(dataset), "--method", "allpair") == EXIT_OK
        rows = [r for r in read_csv(tmp_path / "report.csv") if r["method"] == "allpair"]
        assert len(rows) == 6 and all(float(r["ndcg@10"]) == 1.0 for r in rows)
        exp = load_experiment(tmp_path / "experiment.json")
        assert exp.config["pipeline"]["methods"] == ["allpair"]
        assert exp.config["synthetic"]["seed"] == 0

    def test_slidewin_call_bound(self, tmp_path, experiment):
        stats = json.loads((tmp_path / "stats.json").read_text())
        n = 15
        assert all(s["oracle_calls"] <= 5 * (n - 1) for s in stats["slidewin"].values())
        assert all(s["k"] == 5 for s in stats["topall"].values())

    def test_llm_without_endpoint_fails_fast(self, tmp_path, monkeypatch):
        monkeypatch.delenv("RC_LLM_ENDPOINT", raising=False)
        rc = run(tmp_path, "consolidate", "--dataset", str(tmp_path / "missing.json"), "--oracle", "llm")
        assert rc == EXIT_CONFIG
        assert not (tmp_path / "experiment.json").exists()

    def test_missing_input(self, tmp_path):
        assert run(tmp_path, "consolidate", "--dataset", str(tmp_path / "nope.json")) == EXIT_CONFIG
        assert run(tmp_path, "consolidate") == EXIT_CONFIG

    def test_json_format(self, tmp_path, dataset):
        assert run(tmp_path, "--format", "json", "consolidate", "--dataset", str(dataset)) == EXIT_OK
        doc = json.loads((tmp_path / "report.json").read_text())
        assert {r["method"] for r in doc["reports"]} == {"bm25", "prater", "prp", "allpair"}
        assert doc["failures"] == {}

    def test_cached_complete_preferences_make_no_calls(self, tmp_path, dataset):
        ds = load_dataset(dataset)
        oracle = SyntheticOracle(SyntheticOracleConfig(seed=1, relevance_noise_sigma=0.1, preference_flip_prob=0.1))
        rel = {cl.query_id: oracle.relevance(cl) for cl in ds}
        prefs = {
            cl.query_id: select_allpair(lambda i, j, cl=cl: oracle.compare(cl, i, j), len(cl), cl.query_id).prefs
            for cl in ds
        }
        cache = tmp_path / "cache.json"
        cache.write_text(json.dumps(dump_cached(ds, rel, prefs)))
        rc = run(tmp_path, "consolidate", "--cache", str(cache), "--oracle", "cache", "--method", "allpair")
        assert rc == EXIT_OK
        stats = json.loads((tmp_path / "stats.json").read_text())
        assert all(s["live_calls"] == 0 for s in stats["allpair"].values())

    def test_incomplete_cache_reports_failures(self, tmp_path, dataset):
        ds = load_dataset(dataset)
        oracle = SyntheticOracle(SyntheticOracleConfig())
        rel = {cl.query_id: oracle.relevance(cl) for cl in ds}
        cache = tmp_path / "cache.json"
        cache.write_text(json.dumps(dump_cached(ds, rel, {})))
        rc = run(tmp_path, "consolidate", "--cache", str(cache), "--oracle", "cache")
        assert rc == EXIT_FAIL
        footer = [l for l in (tmp_path / "report.csv").read_text().splitlines() if l.startswith("# failed")]
        assert len(footer) == len(ds)


class TestDownstream:
    def test_evaluate_with_reference(self, tmp_path, experiment, capsys):
        rc = run(tmp_path, "evaluate", "--experiment", str(experiment), "--reference", "prater")
        assert rc == EXIT_OK
        assert "allpair vs prater ndcg@10" in capsys.readouterr().out

    def test_evaluate_empty_experiment(self, tmp_path, dataset):
        assert run(tmp_path, "evaluate", "--experiment", str(dataset)) == EXIT_CONFIG

    def test_calibrate_adds_row(self, tmp_path, experiment):
        rc = run(tmp_path, "calibrate", "--experiment", str(experiment), "--method", "pwl", "--knots", "5")
        assert rc == EXIT_OK
        rows = read_csv(tmp_path / "calibrate-prp-pwl.csv")
        assert {r["method"] for r in rows} == {"prp", "prp+pwl"}
        assert "prp+pwl" in load_experiment(experiment).scores

    def test_calibrate_unknown_source(self, tmp_path, experiment):
        assert run(tmp_path, "calibrate", "--experiment", str(experiment), "--source", "x") == EXIT_CONFIG

    def test_sweep_grid(self, tmp_path, experiment):
        assert run(tmp_path, "sweep-ensemble", "--experiment", str(experiment), "--grid-points", "20") == EXIT_OK
        rows = read_csv(tmp_path / "sweep.csv")
        assert sum(r["label"] == "ensemble" for r in rows) == 20
        assert [r["label"] for r in rows[20:]] == ["allpair", "slidewin", "topall"]
        assert (tmp_path / "sweep.svg").read_text().startswith("<svg")

    def test_sweep_zero_is_prater(self, tmp_path, experiment):
        assert run(tmp_path, "sweep-ensemble", "--experiment", str(experiment), "--weights", "0") == EXIT_OK
        (pt, *_) = read_csv(tmp_path / "sweep.csv")
        assert run(tmp_path, "evaluate", "--experiment", str(experiment), "--methods", "prater") == EXIT_OK
        rows = read_csv(tmp_path / "report.csv")
        mean = sum(float(r["ndcg@10"]) for r in rows) / len(rows)
        assert float(pt["ndcg@10"]) == pytest.approx(mean, abs=1e-12)

    @pytest.mark.parametrize("grid", [["--weights", ""], ["--grid-points", "0"]])
    def test_sweep_empty_grid(self, tmp_path, experiment, grid):
        assert run(tmp_path, "sweep-ensemble", "--experiment", str(experiment), *grid) == EXIT_CONFIG

    def test_ablate_k_rows(self, tmp_path, dataset):
        rc = run(tmp_path, "ablate", "--dataset", str(dataset), "--sigma", "0.1", "--flip", "0.1", "--k", "2,5,10,20")
        assert rc == EXIT_OK
        rows = read_csv(tmp_path / "ablation.csv")
        for m in ("slidewin", "topall"):
            assert [r["k"] for r in rows if r["method"] == m] == ["2", "5", "10", "20"]

    def test_stats(self, tmp_path, dataset, capsys):
        assert run(tmp_path, "stats", "--dataset", str(dataset)) == EXIT_OK
        out = json.loads(capsys.readouterr().out)
        assert out["n_queries"] == 6 and out["mean_list_length"] == 15.0


def test_module_entry_point(tmp_path):
    res = subprocess.run(
        [sys.executable, "-m", "rankcons", "--out-dir", str(tmp_path), "simulate", "--queries", "2", "--list-size", "3"],
        capture_output=True, text=True,
    )
    assert res.returncode == 0, res.stderr
    assert (tmp_path / "dataset.json").exists()
