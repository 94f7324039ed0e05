"""
Command-line front end: one subcommand per pipeline stage, with files handed
between stages (score tables, distance caches, decision graphs).

    python -m backend.app.cli score draws.csv --split-first-s 5000 -o scores.jsonl
    python -m backend.app.cli test draws.csv --candidates cand.csv --scores scores.jsonl
    python -m backend.app.cli dpc draws.csv --scores scores.jsonl --distance-cache d.csv -o graph.csv

Results go to stdout (or -o); logging goes to stderr.
"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import pydantic
from sqlalchemy.exc import SQLAlchemyError

from backend.app.config import (
    DEFAULT_ALPHA,
    DEFAULT_DELTA,
    DEFAULT_GAMMA,
    DEFAULT_OUTLIER_DELTA_QUANTILE,
    DEFAULT_OUTLIER_SCORE_QUANTILE,
    DEFAULT_SEED,
    configure_logging,
    get_settings,
)
from backend.app.errors import (
    IO_EXIT_CODE,
    UNEXPECTED_EXIT_CODE,
    CBIError,
    InvalidConfig,
    ValidationError,
)
from backend.app.pipeline import estimate_record, metric_spec, partition_filter, prepare_samples
from backend.app.runs import finite_json
from backend.app.schemas import RunConfig
from backend.app.solvers.conformal import (
    ConformalConfig,
    assess_candidates,
    ball_test,
    concentration_certificate,
    conditional_region,
    region_summary,
)
from backend.app.solvers.demo_1d import DEMO_GAMMA, DEMO_SEED, run_demo
from backend.app.solvers.dpc import ModePolicy, analyse, export_decision_graph
from backend.app.solvers.metric import DistanceMatrix, MetricSpec, pairwise_distances
from backend.app.solvers.partition import Partition
from backend.app.solvers.sample_io import (
    SampleFile,
    SampleFormat,
    dumps_jsonl,
    dumps_samples,
    load_distance_matrix,
    load_samples,
    load_score_table,
    score_table_records,
)
from backend.app.solvers.scoring import SampleSet, ScoreTable, score_calibration, training_center
from backend.app.solvers.synth import size_check
from backend.app.solvers.thinning import MixingModel, min_thinning, tv_bound

logger = logging.getLogger(__name__)

FORMAT_FOR_METRIC = {
    "vi": SampleFormat.PARTITION_CSV,
    "euclidean": SampleFormat.VECTOR_CSV,
    "precomputed": SampleFormat.DISTANCE_CSV,
}


# ---------------------------------------------------------------------------
# Shared helpers
# ---------------------------------------------------------------------------

def _emit(text: str, output: Optional[str]) -> None:
    if output:
        Path(output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _emit_record(record: Dict[str, Any]) -> None:
    sys.stdout.write(json.dumps(finite_json(record)) + "\n")


def _run_config(args: argparse.Namespace) -> RunConfig:
    fields = {name: getattr(args, name) for name in RunConfig.model_fields if hasattr(args, name)}
    try:
        return RunConfig(**{k: v for k, v in fields.items() if v is not None})
    except pydantic.ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(p) for p in first["loc"]) or "config"
        raise InvalidConfig(f"{where}: {first['msg']}")


def _load(config: RunConfig) -> Tuple[MetricSpec, List[Any]]:
    file = SampleFile(FORMAT_FOR_METRIC[config.metric], config.input, header=config.header)
    matrix = load_distance_matrix(file) if config.metric == "precomputed" else None
    return metric_spec(config.metric, matrix), load_samples(file)


def _samples(config: RunConfig, items: Sequence[Any]) -> SampleSet:
    return prepare_samples(items, config.split_first_s, config.split_fraction, config.seed,
                           thin=config.thin, burn_in=config.burn_in)


def _table(config: RunConfig, spec: MetricSpec, samples: SampleSet, scores_path: Optional[str]) -> ScoreTable:
    if scores_path:
        table = load_score_table(scores_path)
        if table.N != samples.N:
            raise ValidationError(f"score file holds {table.N} scores, the split has {samples.N} calibration samples")
        return table
    return score_calibration(samples, spec, config.gamma, config.subsample, config.seed,
                             threads=config.threads)


def _load_candidates(path: str, config: RunConfig) -> List[Any]:
    if config.metric == "precomputed":
        rows = load_samples(SampleFile(SampleFormat.VECTOR_CSV, path, header=config.header))
        indices = []
        for row in rows:
            if row.size != 1 or row[0] != int(row[0]):
                raise ValidationError("precomputed candidates are one integer sample index per row")
            indices.append(int(row[0]))
        return indices
    return load_samples(SampleFile(FORMAT_FOR_METRIC[config.metric], path, header=config.header))


def _record(args: argparse.Namespace, command: str, config: Dict[str, Any], summary: Dict[str, Any]) -> None:
    if not (getattr(args, "record", False) or get_settings().record_runs):
        return
    from backend.app import database, models
    from backend.app.runs import record_run

    try:
        models.Base.metadata.create_all(bind=database.engine)
        with database.SessionLocal() as db:
            record_run(db, command, config, summary)
    except SQLAlchemyError as e:
        logger.warning("could not record %s run: %s", command, e)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_score(args: argparse.Namespace) -> int:
    config = _run_config(args)
    spec, items = _load(config)
    samples = _samples(config, items)
    table = score_calibration(samples, spec, config.gamma, config.subsample, config.seed,
                              threads=config.threads)
    _emit(dumps_jsonl(score_table_records(table, samples)), config.output)
    _record(args, "score", config.model_dump(), {"n_train": samples.S, "n_calibration": samples.N})
    return 0


def cmd_estimate(args: argparse.Namespace) -> int:
    config = _run_config(args)
    spec, items = _load(config)
    samples = _samples(config, items)
    table = _table(config, spec, samples, args.scores)
    record = estimate_record(samples, table, config.filter_max_k)
    _emit(json.dumps(record) + "\n", config.output)
    _record(args, "estimate", config.model_dump(), {"index": record["index"], "score": record["score"]})
    return 0


def cmd_test(args: argparse.Namespace) -> int:
    config = _run_config(args)
    spec, items = _load(config)
    samples = _samples(config, items)
    table = _table(config, spec, samples, args.scores)
    conformal = ConformalConfig(config.alpha)
    candidates = _load_candidates(args.candidates, config)

    flt = partition_filter(config.filter_max_k)
    if flt is not None:
        reports = [conditional_region(c, samples, table, conformal, spec, flt) for c in candidates]
    else:
        reports = assess_candidates(candidates, samples, table, conformal, spec, threads=config.threads)
    records = [r.to_record() for r in reports]

    if args.ball:
        _, center = training_center(samples.train, spec, table.gamma, table.subsample_size,
                                    table.seed, threads=config.threads)
        ball_reports = ball_test(candidates, center, samples, conformal, spec)
        records = [{**b.to_record(), "kde_in_region": k["in_region"]}
                   for b, k in zip(ball_reports, records)]

    summary = region_summary(table, conformal)
    logger.info("region: k=%d threshold=%r, %d of %d calibration samples inside",
                summary["threshold_rank"], summary["threshold_score"],
                summary["n_inside"], summary["n_calibration"])
    _emit(dumps_jsonl(finite_json(records)), config.output)
    _record(args, "test", config.model_dump(),
            {"n_candidates": len(records), "n_in_region": sum(r["in_region"] for r in records)})
    return 0


def _distances(config: RunConfig, spec: MetricSpec, samples: SampleSet, cache: Optional[str]) -> DistanceMatrix:
    if cache and Path(cache).exists():
        matrix = load_distance_matrix(SampleFile(SampleFormat.DISTANCE_CSV, cache))
        if matrix.size != samples.N:
            raise ValidationError(f"distance cache covers {matrix.size} samples, expected {samples.N}")
        logger.info("reusing calibration distances from %s", cache)
        return matrix
    matrix = pairwise_distances(spec, samples.calibration, threads=config.threads)
    if cache:
        Path(cache).write_text(dumps_samples(matrix, SampleFormat.DISTANCE_CSV), encoding="utf-8")
    return matrix


def cmd_dpc(args: argparse.Namespace) -> int:
    config = _run_config(args)
    spec, items = _load(config)
    samples = _samples(config, items)
    table = _table(config, spec, samples, args.scores)
    distances = _distances(config, spec, samples, args.distance_cache)
    calibration = samples.calibration
    ks = [p.k for p in calibration] if isinstance(calibration[0], Partition) else None

    graph = analyse(table, distances, ModePolicy.parse(config.mode_policy), config.chained,
                    config.outlier_delta_quantile, config.outlier_score_quantile,
                    k_clusters=ks, threads=config.threads)
    graph_text = export_decision_graph(graph, args.graph_format)
    summary = {
        "modes": list(graph.modes),
        "weights": graph.weights.tolist(),
        "mode_k_clusters": None if ks is None else [ks[m] for m in graph.modes],
        "n_outliers": int(graph.outlier_flags.sum()),
    }
    if config.output:
        _emit(graph_text, config.output)
        _emit_record(summary)
    else:
        sys.stdout.write(graph_text)
    _record(args, "dpc", config.model_dump(), summary)
    return 0


def cmd_certificate(args: argparse.Namespace) -> int:
    config = _run_config(args)
    table = load_score_table(args.scores)
    cert = concentration_certificate(table, ConformalConfig(config.alpha), config.delta)
    _emit_record(cert.to_record())
    return 0


def cmd_thin(args: argparse.Namespace) -> int:
    if args.kind == "geometric":
        if args.C is None or args.rho is None:
            raise InvalidConfig("geometric mixing needs --C and --rho")
        model = MixingModel.geometric(args.C, args.rho)
    else:
        if not args.eps:
            raise InvalidConfig("tabulated mixing needs --eps")
        try:
            model = MixingModel.tabulated([float(e) for e in args.eps.split(",")])
        except ValueError as e:
            if isinstance(e, CBIError):
                raise
            raise InvalidConfig(f"--eps must be comma-separated reals: {e}")

    if (args.budget is None) == (args.M is None):
        raise InvalidConfig("give exactly one of --budget and --M")
    if args.budget is not None:
        M = min_thinning(model, args.N, args.budget)
        record = {"M": M, "tv_bound": tv_bound(model, args.N, M), "budget": args.budget}
    else:
        record = {"M": args.M, "tv_bound": tv_bound(model, args.N, args.M)}
    _emit_record({"N": args.N, **record})
    return 0


def cmd_demo_1d(args: argparse.Namespace) -> int:
    record, rows = run_demo(seed=args.seed, gamma=args.gamma, alpha=args.alpha, size=args.size,
                            threads=args.threads)
    if args.output:
        _emit(dumps_jsonl(rows), args.output)
    _emit_record(record)
    _record(args, "demo-1d", {"seed": args.seed, "gamma": args.gamma, "alpha": args.alpha,
                              "size": args.size}, record)
    return 0


def cmd_size_check(args: argparse.Namespace) -> int:
    config = _run_config(args)
    if config.metric != "vi":
        raise InvalidConfig("size-check draws random partitions and needs --metric vi")
    spec, items = _load(config)
    samples = _samples(config, items)
    table = _table(config, spec, samples, args.scores)
    result = size_check(samples, table, ConformalConfig(config.alpha), spec, count=args.count,
                        seed=config.seed, threads=config.threads)
    _emit_record(result)
    _record(args, "size-check", config.model_dump(), result)
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _common(parser: argparse.ArgumentParser, samples: bool = True) -> None:
    parser.add_argument("--threads", type=int, default=None, help="Worker threads (default: CBI_THREADS or all cores).")
    parser.add_argument("--seed", type=int, default=DEFAULT_SEED, help="Seed for shuffles, subsampling and draws.")
    parser.add_argument("--alpha", type=float, default=DEFAULT_ALPHA, help="Miscoverage level in (0, 1).")
    parser.add_argument("-o", "--output", default=None, help="Output file (default: stdout).")
    parser.add_argument("--record", action="store_true", help="Store the run in the history database.")
    if not samples:
        return
    parser.add_argument("input", help="Sample file, one draw per row (distance matrix for --metric precomputed).")
    parser.add_argument("--metric", choices=["vi", "euclidean", "precomputed"], default="vi")
    parser.add_argument("--header", action="store_true", help="Input files start with a header line.")
    parser.add_argument("--gamma", type=float, default=DEFAULT_GAMMA, help="Kernel bandwidth (default 0.5).")
    split = parser.add_mutually_exclusive_group()
    split.add_argument("--split-first-s", type=int, default=None, help="First S draws train (default: half).")
    split.add_argument("--split-fraction", type=float, default=None, help="Shuffle, then this fraction trains.")
    parser.add_argument("--subsample", type=int, default=None, help="Training draws per score (default: all).")
    parser.add_argument("--thin", type=int, default=1, help="Keep every M-th draw.")
    parser.add_argument("--burn-in", type=int, default=0, help="Drop this many leading draws.")
    parser.add_argument("--scores", default=None, help="Reuse a score file written by 'score'.")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cbi", description="Conformalized Bayesian inference on posterior samples.")
    ap.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING (default: CBI_LOG_LEVEL or WARNING).")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("score", help="Calibration D-KDE scores.")
    _common(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("estimate", help="Pseudo-MAP point estimate.")
    _common(p)
    p.add_argument("--filter-max-k", type=int, default=None, help="Only partitions with at most K clusters.")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("test", help="Credible-region membership of candidate parameters.")
    _common(p)
    p.add_argument("--candidates", required=True, help="Candidate file in the input format.")
    p.add_argument("--ball", action="store_true", help="Credible ball around the training KDE maximiser.")
    p.add_argument("--filter-max-k", type=int, default=None, help="Condition on partitions with at most K clusters.")
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("dpc", help="Density-peak decision graph and modes.")
    _common(p)
    p.add_argument("--mode-policy", default="auto", help="'auto' or 'top:m'.")
    p.add_argument("--chained", action="store_true", help="Assign along nearest-higher links.")
    p.add_argument("--outlier-delta-quantile", type=float, default=DEFAULT_OUTLIER_DELTA_QUANTILE)
    p.add_argument("--outlier-score-quantile", type=float, default=DEFAULT_OUTLIER_SCORE_QUANTILE)
    p.add_argument("--distance-cache", default=None, help="Calibration distance CSV, read if present, else written.")
    p.add_argument("--graph-format", choices=["csv", "jsonl"], default="csv")
    p.set_defaults(func=cmd_dpc)

    p = sub.add_parser("certificate", help="Coverage concentration bound from a score file.")
    _common(p, samples=False)
    p.add_argument("--scores", required=True, help="Score file written by 'score'.")
    p.add_argument("--delta", type=float, default=DEFAULT_DELTA, help="Bound holds with probability 1 - delta.")
    p.set_defaults(func=cmd_certificate)

    p = sub.add_parser("thin", help="Thinning bound calculator.")
    p.add_argument("--kind", choices=["geometric", "tabulated"], default="geometric")
    p.add_argument("--C", type=float, default=None)
    p.add_argument("--rho", type=float, default=None)
    p.add_argument("--eps", default=None, help="Comma-separated eps_1, eps_2, ...")
    p.add_argument("-N", "--N", type=int, required=True, help="Number of kept draws.")
    p.add_argument("--budget", type=float, default=None, help="Target total-variation gap.")
    p.add_argument("--M", type=int, default=None, help="Spacing to evaluate.")
    p.set_defaults(func=cmd_thin)

    p = sub.add_parser("demo-1d", help="KDE set versus credible balls on a bimodal mixture.")
    p.add_argument("--seed", type=int, default=DEMO_SEED)
    p.add_argument("--gamma", type=float, default=DEMO_GAMMA)
    p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    p.add_argument("--size", type=int, default=2000)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("-o", "--output", default=None, help="Plot-ready grid rows (JSONL).")
    p.add_argument("--record", action="store_true")
    p.set_defaults(func=cmd_demo_1d)

    p = sub.add_parser("size-check", help="Share of random partitions excluded from the region.")
    _common(p)
    p.add_argument("--count", type=int, default=1000)
    p.set_defaults(func=cmd_size_check)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        return args.func(args)
    except CBIError as e:
        logger.error("%s: %s", type(e).__name__, e)
        return e.exit_code
    except OSError as e:
        logger.error("I/O error: %s", e)
        return IO_EXIT_CODE
    except Exception:
        logger.exception("unexpected failure")
        return UNEXPECTED_EXIT_CODE


if __name__ == "__main__":
    sys.exit(main())
