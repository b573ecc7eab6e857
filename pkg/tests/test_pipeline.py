import numpy as np
import pytest

from rankcons.domain import ScoreKind
from rankcons.metrics import ndcg_at_k
from rankcons.oracles.base import PairMemo
from rankcons.oracles.synthetic import SyntheticOracle, SyntheticOracleConfig, simulate_dataset
from rankcons.pipeline import (
    PipelineConfig,
    ablation_grid,
    calibrate_method,
    default_weight_grid,
    evaluate_experiment,
    run_pipeline,
    sweep_ensemble,
)
from rankcons.prp import win_count_scores


@pytest.fixture(scope="module")
def noisy():
    ds = simulate_dataset(12, 20, seed=1)
    oracle = SyntheticOracle(SyntheticOracleConfig(seed=1, relevance_noise_sigma=0.15, preference_flip_prob=0.15))
    exp = run_pipeline(ds, oracle, oracle, PipelineConfig(methods=("allpair", "slidewin", "topall"), k=5))
    return ds, oracle, exp


class TestConfig:
    @pytest.mark.parametrize(
        "kw", [{"methods": ("nope",)}, {"init_ranking": "x"}, {"base": "x"}, {"k": 0}, {"workers": 0}]
    )
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            PipelineConfig(**kw)

    def test_auto_init(self):
        cfg = PipelineConfig()
        assert cfg.init_for("slidewin") == "retrieval"
        assert cfg.init_for("topall") == "relevance"
        assert PipelineConfig(init_ranking="relevance").init_for("slidewin") == "relevance"


class TestRun:
    def test_noiseless_allpair_is_perfect(self):
        ds = simulate_dataset(5, 20, seed=0)
        oracle = SyntheticOracle(SyntheticOracleConfig(seed=0))
        exp = run_pipeline(ds, oracle, oracle, PipelineConfig(methods=("allpair", "slidewin")))
        assert not exp.failures
        for cl in ds:
            for m in ("allpair", "slidewin", "prp", "prater"):
                assert ndcg_at_k(cl.labels, exp.rankings[m][cl.query_id], 10) == 1.0
            np.testing.assert_allclose(exp.scores["allpair"][cl.query_id].values, cl.normalized_labels, atol=1e-9)

    def test_methods_and_kinds(self, noisy):
        ds, _, exp = noisy
        assert set(exp.scores) == {"bm25", "prater", "prp", "allpair", "slidewin", "topall"}
        q = ds.lists[0].query_id
        assert exp.scores["prp"][q].kind is ScoreKind.PRP_SCORE
        assert exp.scores["allpair"][q].kind is ScoreKind.CONSOLIDATED
        np.testing.assert_array_equal(
            exp.scores["prp"][q].values, win_count_scores(exp.preferences["prp"][q]).values
        )

    def test_call_counts(self, noisy):
        ds, _, exp = noisy
        n, k = 20, 5
        for cl in ds:
            st = exp.stats
            assert st["prp"][cl.query_id]["oracle_calls"] == n * (n - 1) // 2
            assert st["slidewin"][cl.query_id]["oracle_calls"] <= k * (n - 1)
            assert st["topall"][cl.query_id]["oracle_calls"] == k * (n - k) + k * (k - 1) // 2
            # every pair was already asked by allpair, so later methods cost nothing live
            assert st["slidewin"][cl.query_id]["live_calls"] == 0
            assert st["topall"][cl.query_id]["live_calls"] == 0

    def test_consolidated_rankings_follow_constraints(self, noisy):
        ds, _, exp = noisy
        for m in ("allpair", "slidewin", "topall"):
            for cl in ds:
                st = exp.stats[m][cl.query_id]
                assert st["max_violation"] <= 1e-6

    def test_workers_do_not_change_results(self, noisy):
        ds, oracle, exp = noisy
        par = run_pipeline(
            ds, oracle, oracle, PipelineConfig(methods=("allpair", "slidewin", "topall"), k=5, workers=4)
        )
        for m in exp.scores:
            for q in exp.scores[m]:
                np.testing.assert_array_equal(par.scores[m][q].values, exp.scores[m][q].values)

    def test_failure_is_isolated(self):
        ds = simulate_dataset(3, 5, seed=0)
        oracle = SyntheticOracle(SyntheticOracleConfig())
        bad = ds.lists[1].query_id

        def relevance(cl):
            if cl.query_id == bad:
                raise RuntimeError("no scores")
            return oracle.relevance(cl)

        exp = run_pipeline(ds, relevance, oracle)
        assert list(exp.failures) == [bad] and "no scores" in exp.failures[bad]
        assert bad not in exp.scores["allpair"] and len(exp.scores["allpair"]) == 2

    def test_preloaded_memo_makes_no_live_calls(self, noisy):
        ds, oracle, exp = noisy
        memo = PairMemo(None, preload=exp.preferences["prp"])
        again = run_pipeline(ds, oracle, memo, PipelineConfig(methods=("allpair",)))
        assert memo.calls() == 0
        for q, sv in exp.scores["allpair"].items():
            np.testing.assert_array_equal(again.scores["allpair"][q].values, sv.values)


class TestEvaluate:
    def test_reports(self, noisy):
        _, _, exp = noisy
        reps = evaluate_experiment(exp, cutoffs=(10,))
        assert set(reps) == set(exp.scores)
        assert reps["allpair"].aggregate["ndcg@10"] >= reps["bm25"].aggregate["ndcg@10"]

    def test_unknown_method(self, noisy):
        with pytest.raises(KeyError):
            evaluate_experiment(noisy[2], ["nope"])

    def test_no_scores(self):
        from rankcons.data_io import Experiment

        with pytest.raises(ValueError):
            evaluate_experiment(Experiment(simulate_dataset(1, 3)))

    def test_calibrate_adds_method(self, noisy):
        _, _, exp = noisy
        name = calibrate_method(exp, "prp", "pwl", folds=4, seed=0, n_knots=5)
        assert name == "prp+pwl"
        assert {sv.kind for sv in exp.scores[name].values()} == {ScoreKind.CALIBRATED}
        reps = evaluate_experiment(exp, ["prp", name], cutoffs=(10,))
        assert reps[name].aggregate["ndcg@10"] == reps["prp"].aggregate["ndcg@10"]
        assert exp.config["calibration"][name]["source"] == "prp"


class TestSweep:
    def test_zero_weight_is_prater(self, noisy):
        _, _, exp = noisy
        (pt, *overlay) = sweep_ensemble(exp, [0.0], overlay=())
        rep = evaluate_experiment(exp, ["prater"], cutoffs=(10,))["prater"]
        assert overlay == []
        assert pt.ndcg == pytest.approx(rep.aggregate["ndcg@10"], abs=1e-12)
        assert pt.ece == pytest.approx(rep.aggregate["ece"], abs=1e-12)

    def test_large_weight_ranks_like_prp(self, noisy):
        _, _, exp = noisy
        pts = sweep_ensemble(exp, [0.0, 1e6], overlay=())
        rep = evaluate_experiment(exp, ["prp"], cutoffs=(10,))["prp"]
        assert pts[1].ndcg == pytest.approx(rep.aggregate["ndcg@10"], abs=1e-12)

    def test_grid_and_overlay(self, noisy):
        _, _, exp = noisy
        pts = sweep_ensemble(exp, default_weight_grid(20))
        assert len(pts) == 23
        assert [p.label for p in pts[20:]] == ["allpair", "slidewin", "topall"]
        assert any(p.pareto for p in pts[:20])

    def test_empty_grid(self, noisy):
        with pytest.raises(ValueError):
            sweep_ensemble(noisy[2], [])
        with pytest.raises(ValueError):
            default_weight_grid(0)


class TestAblation:
    def test_rows_per_k(self):
        ds = simulate_dataset(4, 25, seed=2)
        oracle = SyntheticOracle(SyntheticOracleConfig(seed=2, relevance_noise_sigma=0.1, preference_flip_prob=0.1))
        rows = ablation_grid(ds, oracle, oracle, ks=(2, 5, 10, 20))
        assert [(r["method"], r["k"]) for r in rows] == [
            ("slidewin", 2), ("slidewin", 5), ("slidewin", 10), ("slidewin", 20),
            ("topall", 2), ("topall", 5), ("topall", 10), ("topall", 20),
        ]
        calls = {(r["method"], r["k"]): r["mean_oracle_calls"] for r in rows}
        for k in (2, 5, 10, 20):
            assert calls[("topall", k)] == k * (25 - k) + k * (k - 1) // 2

    def test_full_grid_shape(self):
        ds = simulate_dataset(2, 8, seed=3)
        oracle = SyntheticOracle(SyntheticOracleConfig(seed=3))
        rows = ablation_grid(
            ds, oracle, oracle, methods=("allpair", "topall"), ks=(2, 3),
            inits=("retrieval", "relevance"), bases=("relevance", "retrieval"),
        )
        # allpair once per base; topall 2 inits x 2 ks per base
        assert len(rows) == 2 * (1 + 4)
        assert {r["init"] for r in rows if r["method"] == "topall"} == {"retrieval", "relevance"}
