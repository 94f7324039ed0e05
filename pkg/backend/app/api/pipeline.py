import time

from fastapi import APIRouter, Depends
from sqlalchemy.orm import Session

from backend.app import database, schemas
from backend.app.pipeline import (
    estimate_record,
    metric_spec,
    parse_rows,
    partition_filter,
    prepare_samples,
)
from backend.app.runs import finite_json, record_run
from backend.app.solvers.conformal import (
    ConformalConfig,
    assess_candidates,
    ball_test,
    conditional_region,
    region_summary,
)
from backend.app.solvers.dpc import ModePolicy, analyse, graph_records
from backend.app.solvers.metric import pairwise_distances
from backend.app.solvers.partition import Partition
from backend.app.solvers.scoring import score_calibration, training_center

router = APIRouter()


def _score(payload: schemas.PipelineInput):
    spec = metric_spec(payload.metric)
    items = parse_rows(payload.samples, payload.metric)
    samples = prepare_samples(items, payload.split_first_s, payload.split_fraction, payload.seed)
    table = score_calibration(samples, spec, payload.gamma, payload.subsample, payload.seed,
                              threads=payload.threads)
    return spec, samples, table


@router.post("/score", response_model=schemas.ScoreResponse)
def score_samples(payload: schemas.PipelineInput, db: Session = Depends(database.get_db)):
    """Calibration D-KDE scores and the pseudo-MAP estimate."""
    start = time.perf_counter()
    _, samples, table = _score(payload)
    estimate = estimate_record(samples, table, payload.filter_max_k)
    result = {
        "n_train": samples.S,
        "n_calibration": samples.N,
        "scores": table.scores.tolist(),
        "estimate": estimate,
        "timing": time.perf_counter() - start,
    }
    record_run(db, "score", payload.model_dump(exclude={"samples"}),
               {"n_calibration": samples.N, "estimate_index": estimate["index"]})
    return result


@router.post("/test", response_model=schemas.RegionTestResponse)
def test_region(payload: schemas.RegionTestInput, db: Session = Depends(database.get_db)):
    """Credible-region membership of candidate parameters (KDE score, or credible ball)."""
    spec, samples, table = _score(payload)
    config = ConformalConfig(payload.alpha)
    candidates = parse_rows(payload.candidates, payload.metric)
    flt = partition_filter(payload.filter_max_k)
    if flt is not None:
        reports = [conditional_region(c, samples, table, config, spec, flt) for c in candidates]
    else:
        reports = assess_candidates(candidates, samples, table, config, spec, threads=payload.threads)
    records = [r.to_record() for r in reports]

    if payload.ball:
        if payload.center is not None:
            center = parse_rows([payload.center], payload.metric)[0]
        else:
            _, center = training_center(samples.train, spec, payload.gamma, payload.subsample,
                                        payload.seed, threads=payload.threads)
        ball_reports = ball_test(candidates, center, samples, config, spec)
        records = [{**b.to_record(), "kde_in_region": k["in_region"]}
                   for b, k in zip(ball_reports, records)]

    summary = region_summary(table, config)
    record_run(db, "test", payload.model_dump(exclude={"samples", "candidates"}),
               {"n_candidates": len(records), "n_in_region": sum(r["in_region"] for r in records)})
    return finite_json({"reports": records, "summary": summary})


@router.post("/dpc", response_model=schemas.DPCResponse)
def density_peaks(payload: schemas.DPCInput, db: Session = Depends(database.get_db)):
    """Decision graph, modes and mode weights of the calibration samples."""
    spec, samples, table = _score(payload)
    distances = pairwise_distances(spec, samples.calibration, threads=payload.threads)
    ks = None
    if samples.calibration and isinstance(samples.calibration[0], Partition):
        ks = [p.k for p in samples.calibration]
    graph = analyse(table, distances, ModePolicy.parse(payload.mode_policy), payload.chained,
                    payload.outlier_delta_quantile, payload.outlier_score_quantile,
                    k_clusters=ks, threads=payload.threads)
    result = {"modes": list(graph.modes), "weights": graph.weights.tolist(),
              "records": graph_records(graph)}
    record_run(db, "dpc", payload.model_dump(exclude={"samples"}),
               {"modes": result["modes"], "weights": result["weights"]})
    return result
