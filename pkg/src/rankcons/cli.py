"""Command-line entry point: ``python -m rankcons <command> ...``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .consolidation import SolverConfig
from .data_io import (
    Experiment,
    atomic_write_text,
    dataset_stats,
    load_experiment,
    load_qrels,
    load_run,
    save_dataset,
    save_experiment,
)
from .domain import Dataset, validate_dataset
from .metrics import DEFAULT_CUTOFFS, EvalReport, paired_significance
from .oracles.base import PairMemo
from .oracles.cached import CachedOracle
from .oracles.synthetic import SyntheticOracle, SyntheticOracleConfig, simulate_dataset
from .pipeline import (
    BASE_CHOICES,
    CONSOLIDATED,
    INIT_CHOICES,
    PipelineConfig,
    ablation_grid,
    calibrate_method,
    default_weight_grid,
    evaluate_experiment,
    run_pipeline,
    sweep_ensemble,
)
from .plots import tradeoff_svg
from .selection import DEFAULT_K

log = logging.getLogger("rankcons")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


class ConfigError(Exception):
    pass


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _str_list(choices):
    def parse(text: str) -> list[str]:
        items = [x.strip() for x in text.split(",") if x.strip()]
        bad = [x for x in items if x not in choices]
        if bad or not items:
            raise argparse.ArgumentTypeError(f"choose from {', '.join(choices)}; got {text!r}")
        return items

    return parse


# ---------------------------------------------------------------- parser


def _add_data_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("input data (pick one)")
    g.add_argument("--dataset", help="dataset or experiment JSON written by this tool")
    g.add_argument("--run", help="TREC run file (use with --qrels)")
    g.add_argument("--qrels", help="TREC qrels file")
    g.add_argument("--top-n", type=int, default=100, help="candidates kept per query from --run")
    g.add_argument("--cache", help="released oracle JSON with documents, scores and verdicts")


def _add_oracle_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("oracle")
    g.add_argument("--oracle", choices=("synthetic", "cache", "llm"), default="synthetic")
    g.add_argument("--sigma", type=float, default=0.0, help="synthetic relevance noise")
    g.add_argument("--flip", type=float, default=0.0, help="synthetic preference flip probability")
    g.add_argument("--tie", type=float, default=0.0, help="synthetic tie probability")
    g.add_argument("--endpoint", help="LLM endpoint URL (else $RC_LLM_ENDPOINT)")
    g.add_argument("--cache-dir", help="on-disk cache for LLM responses")


def _add_solver_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("solver")
    g.add_argument("--feasibility-tol", type=float, default=1e-9)
    g.add_argument("--max-iters", type=int, default=None, help="cycle cap (default 100*n*|constraints|)")


def _add_eval_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--cutoffs", type=_int_list, default=list(DEFAULT_CUTOFFS))
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--pooled-ece", action="store_true", help="also report ECE over pooled documents")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rankcons", description="Ranking-aware relevance consolidation.")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out-dir", default=".")
    ap.add_argument("--format", choices=("csv", "json"), default="csv")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write a synthetic labelled dataset")
    p.add_argument("--queries", type=int, default=50)
    p.add_argument("--list-size", type=int, default=100)
    p.add_argument("--grades", type=_int_list, default=[0, 1, 2, 3])
    p.add_argument("--label-weights", type=_float_list, default=None)
    p.add_argument("--retrieval-noise", type=float, default=0.3)
    p.add_argument("--name", default="synthetic")
    p.add_argument("--output", default="dataset.json")

    p = sub.add_parser("consolidate", help="run the pipeline and write experiment + report")
    _add_data_args(p)
    _add_oracle_args(p)
    _add_solver_args(p)
    _add_eval_args(p)
    p.add_argument("--method", type=_str_list(CONSOLIDATED + ("prp",)), default=["allpair"])
    p.add_argument("--k", type=int, default=DEFAULT_K)
    p.add_argument("--init-ranking", choices=INIT_CHOICES, default="auto")
    p.add_argument("--base", choices=BASE_CHOICES, default="relevance")
    p.add_argument("--output", default="experiment.json")

    p = sub.add_parser("evaluate", help="recompute reports from an experiment file")
    p.add_argument("--experiment", required=True)
    p.add_argument("--methods", type=lambda s: [x for x in s.split(",") if x], default=None)
    p.add_argument("--reference", default=None, help="paired t-test of every method against this one")
    _add_eval_args(p)

    p = sub.add_parser("calibrate", help="cross-validated PWL / Platt on a stored score vector")
    p.add_argument("--experiment", required=True)
    p.add_argument("--source", default="prp", help="method whose scores are calibrated")
    p.add_argument("--method", choices=("pwl", "platt"), default="pwl")
    p.add_argument("--knots", type=int, default=10)
    p.add_argument("--folds", type=int, default=4)
    p.add_argument("--output", default=None, help="updated experiment (default: overwrite input)")
    _add_eval_args(p)

    p = sub.add_parser("sweep-ensemble", help="NDCG/ECE tradeoff of relevance + w * win counts")
    p.add_argument("--experiment", required=True)
    p.add_argument("--weights", type=_float_list, default=None, help="explicit weights")
    p.add_argument("--grid-points", type=int, default=20)
    p.add_argument("--w-min", type=float, default=1e-2)
    p.add_argument("--w-max", type=float, default=1e2)
    p.add_argument("--cutoff", type=int, default=10)
    p.add_argument("--bins", type=int, default=10)

    p = sub.add_parser("ablate", help="sweep init ranker x base rater x k")
    _add_data_args(p)
    _add_oracle_args(p)
    _add_solver_args(p)
    p.add_argument("--method", type=_str_list(CONSOLIDATED), default=["slidewin", "topall"])
    p.add_argument("--k", type=_int_list, default=[DEFAULT_K])
    p.add_argument("--init-ranking", type=_str_list(INIT_CHOICES), default=["auto"])
    p.add_argument("--base", type=_str_list(BASE_CHOICES), default=["relevance"])
    p.add_argument("--cutoff", type=int, default=10)
    p.add_argument("--bins", type=int, default=10)

    p = sub.add_parser("stats", help="label alphabet and list sizes of a dataset")
    _add_data_args(p)
    p.add_argument("--experiment", help="experiment file (its dataset is described)")
    return ap


# ---------------------------------------------------------------- helpers


def _load_data(args) -> tuple[Dataset, CachedOracle | None]:
    given = [x for x in ("dataset", "run", "cache") if getattr(args, x, None)]
    if len(given) != 1:
        raise ConfigError("give exactly one of --dataset, --run (+ --qrels) or --cache")
    if args.cache:
        return CachedOracle.from_file(args.cache)
    if args.run:
        qrels = load_qrels(args.qrels) if args.qrels else None
        return load_run(args.run, top_n=args.top_n, qrels=qrels), None
    return _require_file(args.dataset, load_experiment).dataset, None


def _require_file(path, loader):
    if not Path(path).exists():
        raise ConfigError(f"input file not found: {path}")
    return loader(path)


def _make_oracles(args, cached: CachedOracle | None):
    """Return (relevance oracle, PairMemo, config dict); fails fast on bad configuration."""
    if args.oracle == "llm":
        from .oracles.llm import LLMClient, LLMClientConfig, LLMConfigError, LLMOracle

        try:
            cfg = LLMClientConfig.from_env(endpoint=args.endpoint, cache_dir=args.cache_dir)
        except LLMConfigError as exc:
            raise ConfigError(str(exc)) from None
        oracle = LLMOracle(LLMClient(cfg))
        return oracle, PairMemo(oracle), {"oracle": "llm", "endpoint": cfg.endpoint}
    if args.oracle == "cache":
        if cached is None:
            raise ConfigError("--oracle cache needs --cache FILE")
        return cached, PairMemo(None, preload=cached.preferences), {"oracle": "cache", "cache": args.cache}
    cfg = SyntheticOracleConfig(
        seed=args.seed,
        relevance_noise_sigma=args.sigma,
        preference_flip_prob=args.flip,
        tie_prob=args.tie,
    )
    oracle = SyntheticOracle(cfg)
    return oracle, PairMemo(oracle), {"oracle": "synthetic", "synthetic": cfg.to_dict()}


def _solver(args) -> SolverConfig:
    return SolverConfig(feasibility_tol=args.feasibility_tol, max_iters=args.max_iters, allow_cycles=True)


def _write(args, name: str, text: str) -> Path:
    path = Path(args.out_dir) / name
    atomic_write_text(path, text)
    log.info("wrote %s", path)
    return path


def _csv_text(rows: list[dict], footer: list[str] | None = None) -> str:
    buf = io.StringIO()
    if rows:
        fields = list(dict.fromkeys(k for r in rows for k in r))
        w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    for line in footer or []:
        buf.write(f"# {line}\n")
    return buf.getvalue()


def _write_reports(args, stem: str, reports: dict[str, EvalReport], failures: dict[str, str]) -> Path:
    footer = [f"failed {q}: {e}" for q, e in sorted(failures.items())]
    if args.format == "json":
        doc = {"reports": [r.to_dict() for r in reports.values()], "failures": failures}
        return _write(args, f"{stem}.json", json.dumps(doc, indent=1) + "\n")
    rows = [row for r in reports.values() for row in r.rows()]
    return _write(args, f"{stem}.csv", _csv_text(rows, footer))


def _print_summary(reports: dict[str, EvalReport], out=sys.stdout) -> None:
    for name, rep in reports.items():
        agg = "  ".join(f"{k}={v:.4f}" for k, v in rep.aggregate.items())
        print(f"{name:>16}  {agg}", file=out)


def _load_experiment_arg(args) -> Experiment:
    exp = _require_file(args.experiment, load_experiment)
    if not exp.scores:
        raise ConfigError(f"{args.experiment}: experiment has no scores (run consolidate first)")
    return exp


# ---------------------------------------------------------------- commands


def cmd_simulate(args) -> int:
    ds = simulate_dataset(
        args.queries,
        args.list_size,
        grades=args.grades,
        seed=args.seed,
        label_weights=args.label_weights,
        retrieval_noise_sigma=args.retrieval_noise,
        name=args.name,
    )
    config = {
        "simulate": {
            "queries": args.queries,
            "list_size": args.list_size,
            "grades": args.grades,
            "label_weights": args.label_weights,
            "retrieval_noise": args.retrieval_noise,
            "seed": args.seed,
        }
    }
    path = Path(args.out_dir) / args.output
    save_dataset(ds, path, config)
    print(f"wrote {len(ds)} queries to {path}")
    return EXIT_OK


def cmd_consolidate(args) -> int:
    if args.oracle == "llm":
        # configuration problems surface before any data is read
        _make_oracles(args, None)
    dataset, cached = _load_data(args)
    report = validate_dataset(dataset.lists, dataset.max_grade)
    if not report.ok:
        raise ConfigError(f"invalid dataset:\n{report}")
    rel, memo, oracle_cfg = _make_oracles(args, cached)
    cfg = PipelineConfig(
        methods=tuple(args.method),
        k=args.k,
        init_ranking=args.init_ranking,
        base=args.base,
        solver=_solver(args),
        workers=args.workers,
    )
    exp = run_pipeline(dataset, rel, memo, cfg, {**oracle_cfg, "seed": args.seed})
    save_experiment(exp, Path(args.out_dir) / args.output)
    reports = evaluate_experiment(exp, cutoffs=args.cutoffs, n_bins=args.bins, pooled_ece=args.pooled_ece) if exp.scores else {}
    _print_summary(reports)
    for m in args.method:
        if m in exp.stats:
            calls = [s["oracle_calls"] for s in exp.stats[m].values()]
            live = [s["live_calls"] for s in exp.stats[m].values()]
            print(f"{m:>16}  oracle_calls/query={np.mean(calls):.1f}  live_calls={int(np.sum(live))}")
    _write_reports(args, "report", reports, exp.failures)
    _write(args, "stats.json", json.dumps(exp.stats, indent=1) + "\n")
    if exp.failures:
        for q, e in sorted(exp.failures.items()):
            print(f"failed {q}: {e}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_evaluate(args) -> int:
    exp = _load_experiment_arg(args)
    reports = evaluate_experiment(exp, args.methods, args.cutoffs, args.bins, args.pooled_ece)
    _print_summary(reports)
    if args.reference:
        if args.reference not in reports:
            raise ConfigError(f"reference method {args.reference!r} not evaluated")
        ref = reports[args.reference]
        key = f"ndcg@{10 if 10 in args.cutoffs else args.cutoffs[0]}"
        for name, rep in reports.items():
            if name == args.reference:
                continue
            for metric in (key, "ece"):
                sig = paired_significance(rep.metric(metric), ref.metric(metric))
                print(f"{name} vs {args.reference} {metric}: t={sig.t_stat:.3f} p={sig.p_value:.3g}"
                      f"{' *' if sig.significant else ''}")
    _write_reports(args, "report", reports, exp.failures)
    return EXIT_FAIL if exp.failures else EXIT_OK


def cmd_calibrate(args) -> int:
    exp = _load_experiment_arg(args)
    if args.source not in exp.scores:
        raise ConfigError(f"no {args.source!r} scores in {args.experiment} (have {sorted(exp.scores)})")
    name = calibrate_method(exp, args.source, args.method, args.folds, args.seed, args.knots)
    out = Path(args.output) if args.output else Path(args.experiment)
    save_experiment(exp, out)
    reports = evaluate_experiment(exp, [args.source, name], args.cutoffs, args.bins, args.pooled_ece)
    _print_summary(reports)
    _write_reports(args, f"calibrate-{name.replace('+', '-')}", reports, {})
    return EXIT_OK


def cmd_sweep_ensemble(args) -> int:
    exp = _load_experiment_arg(args)
    if args.weights is not None:
        weights = args.weights
    elif args.grid_points < 1:
        raise ConfigError("empty weight grid")
    else:
        weights = default_weight_grid(args.grid_points, args.w_min, args.w_max)
    if len(weights) == 0:
        raise ConfigError("empty weight grid")
    points = sweep_ensemble(exp, weights, cutoff=args.cutoff, n_bins=args.bins)
    key = f"ndcg@{args.cutoff}"
    rows = [
        {"label": p.label, "w": "" if p.w is None else p.w, key: p.ndcg, "ece": p.ece, "pareto": int(p.pareto)}
        for p in points
    ]
    if args.format == "json":
        _write(args, "sweep.json", json.dumps(rows, indent=1) + "\n")
    else:
        _write(args, "sweep.csv", _csv_text(rows))
    _write(args, "sweep.svg", tradeoff_svg(points, args.cutoff))
    for r in rows:
        print(f"{r['label']:>10} w={r['w']!s:>10} {key}={r[key]:.4f} ece={r['ece']:.4f}{' pareto' if r['pareto'] else ''}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    if args.oracle == "llm":
        _make_oracles(args, None)
    dataset, cached = _load_data(args)
    rel, memo, _ = _make_oracles(args, cached)
    rows = ablation_grid(
        dataset,
        rel,
        memo,
        methods=args.method,
        ks=args.k,
        inits=args.init_ranking,
        bases=args.base,
        solver=_solver(args),
        workers=args.workers,
        cutoff=args.cutoff,
        n_bins=args.bins,
    )
    if args.format == "json":
        _write(args, "ablation.json", json.dumps(rows, indent=1) + "\n")
    else:
        _write(args, "ablation.csv", _csv_text(rows))
    for r in rows:
        print("  ".join(f"{k}={v:.4f}" if isinstance(v, float) else f"{k}={v}" for k, v in r.items()))
    return EXIT_OK


def cmd_stats(args) -> int:
    if getattr(args, "experiment", None):
        dataset = _require_file(args.experiment, load_experiment).dataset
    else:
        dataset, _ = _load_data(args)
    print(json.dumps(dataset_stats(dataset.lists), indent=1))
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "consolidate": cmd_consolidate,
    "evaluate": cmd_evaluate,
    "calibrate": cmd_calibrate,
    "sweep-ensemble": cmd_sweep_ensemble,
    "ablate": cmd_ablate,
    "stats": cmd_stats,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s"
    )
    if args.workers < 1:
        print("error: --workers must be positive", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
