"""
Split-conformal p-values, credible-region tests and coverage certificates.

    p(theta) = (#{calibration scores <= s(theta)} + 1) / (N + 1)
    theta is in the (1 - alpha) region  iff  p(theta) >= alpha
                                        iff  s(theta) >= s_(k),  k = ceil(alpha (N + 1) - 1)
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
from scipy.stats import beta

from backend.app.errors import FilterViolation, InvalidConfig, NoCandidate, ValidationError
from backend.app.solvers.metric import MetricSpec, distances_to, stack
from backend.app.solvers.scoring import CANDIDATE_STREAM, Filter, SampleSet, ScoreTable, score_candidates

logger = logging.getLogger(__name__)

# alpha * (N + 1) is rounded to this many decimals before ceil, so 0.1 * 1000 is 100, not 100.00000000000001
_RANK_DECIMALS = 9


@dataclass(frozen=True)
class ConformalConfig:
    alpha: float

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise InvalidConfig(f"alpha must lie in (0, 1), got {self.alpha}")


@dataclass(frozen=True)
class ConformalReport:
    p_value: float
    threshold_rank: int
    threshold_score: float
    in_region: bool
    score: float
    n_calibration: int
    degenerate: bool = False
    method: str = "kde"
    distance: Optional[float] = None
    radius: Optional[float] = None

    def to_record(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class ConcentrationCertificate:
    alpha: float
    N: int
    delta: float
    threshold_rank: int
    threshold_score: float
    term_rank: float
    term_jump: float
    term_dkw: float
    total_bound: float
    continuous_bound: float
    coverage_low: float
    coverage_high: float

    def to_record(self) -> Dict[str, Any]:
        return asdict(self)


def threshold_rank(alpha: float, n: int) -> int:
    """k_{alpha,N} = ceil(alpha (N + 1) - 1), unclamped."""
    return math.ceil(round(alpha * (n + 1) - 1, _RANK_DECIMALS))


def ball_rank(alpha: float, n: int) -> int:
    """Rank of the empirical ceil((N + 1)(1 - alpha)) / N quantile."""
    return math.ceil(round((n + 1) * (1 - alpha), _RANK_DECIMALS))


def _sorted(scores: Union[ScoreTable, Sequence[float], np.ndarray]) -> np.ndarray:
    if isinstance(scores, ScoreTable):
        return scores.sorted_scores
    arr = np.sort(np.asarray(scores, dtype=np.float64).reshape(-1))
    if arr.size == 0:
        raise ValidationError("conformal p-values need at least one calibration score")
    return arr


def conformal_p_value(new_score: float, table: Union[ScoreTable, Sequence[float], np.ndarray]) -> float:
    """Ties with calibration scores count toward the numerator."""
    ordered = _sorted(table)
    count = int(np.searchsorted(ordered, new_score, side="right"))
    return (count + 1) / (ordered.size + 1)


def _kde_report(new_score: float, ordered: np.ndarray, config: ConformalConfig) -> ConformalReport:
    n = int(ordered.size)
    k = threshold_rank(config.alpha, n)
    p_value = conformal_p_value(new_score, ordered)
    degenerate = k < 1
    if degenerate:
        logger.warning("k_{alpha,N} = %d < 1 for alpha=%g, N=%d: region covers every scored object",
                       k, config.alpha, n)
        k, threshold = 0, -math.inf
    else:
        threshold = float(ordered[k - 1])
    return ConformalReport(
        p_value=p_value,
        threshold_rank=k,
        threshold_score=threshold,
        in_region=p_value >= config.alpha,
        score=float(new_score),
        n_calibration=n,
        degenerate=degenerate,
    )


def assess_candidates(
    candidates: Sequence[Any],
    samples: SampleSet,
    table: ScoreTable,
    config: ConformalConfig,
    spec: MetricSpec,
    threads: Optional[int] = None,
) -> List[ConformalReport]:
    """Region membership for many candidates; candidate j uses subsampling stream j."""
    if table.N != samples.N:
        raise ValidationError(f"score table has {table.N} scores for {samples.N} calibration samples")
    if not candidates:
        return []
    train_block = stack(spec, samples.train)
    new_scores = score_candidates(candidates, train_block, spec, table.gamma,
                                  table.subsample_size, table.seed,
                                  family=CANDIDATE_STREAM, threads=threads)
    return [_kde_report(s, table.sorted_scores, config) for s in new_scores]


def region_membership(
    theta: Any,
    samples: SampleSet,
    table: ScoreTable,
    config: ConformalConfig,
    spec: MetricSpec,
) -> ConformalReport:
    return assess_candidates([theta], samples, table, config, spec, threads=1)[0]


def conditional_region(
    theta: Any,
    samples: SampleSet,
    table: ScoreTable,
    config: ConformalConfig,
    spec: MetricSpec,
    filter: Filter,
) -> ConformalReport:
    """Region membership against the calibration samples that pass ``filter`` only."""
    if not filter(theta):
        raise FilterViolation("the tested parameter does not satisfy the conditioning filter")
    mask = np.array([bool(filter(item)) for item in samples.calibration], dtype=bool)
    if not mask.any():
        raise NoCandidate("no calibration sample passes the conditioning filter")
    train_block = stack(spec, samples.train)
    new_score = score_candidates([theta], train_block, spec, table.gamma,
                                 table.subsample_size, table.seed,
                                 family=CANDIDATE_STREAM, threads=1)[0]
    return _kde_report(new_score, table.restrict(mask).sorted_scores, config)


def _ball_report(d: float, ordered: np.ndarray, config: ConformalConfig) -> ConformalReport:
    n = int(ordered.size)
    r = ball_rank(config.alpha, n)
    # p-value under the score -D(., center): count calibration distances >= d
    count = n - int(np.searchsorted(ordered, d, side="left"))
    p_value = (count + 1) / (n + 1)
    if r > n:
        logger.warning("ball quantile rank %d exceeds N=%d: region is the whole space", r, n)
        radius, in_region, degenerate = math.inf, True, True
    else:
        radius = float(ordered[r - 1])
        in_region, degenerate = bool(d <= radius), False
    return ConformalReport(
        p_value=p_value,
        threshold_rank=r,
        threshold_score=-radius,
        in_region=in_region,
        score=-float(d),
        n_calibration=n,
        degenerate=degenerate,
        method="ball",
        distance=float(d),
        radius=radius,
    )


def ball_test(
    candidates: Sequence[Any],
    center: Any,
    samples: SampleSet,
    config: ConformalConfig,
    spec: MetricSpec,
) -> List[ConformalReport]:
    """Credible-ball membership {theta : D(theta, center) <= q_{1-alpha}} for many candidates."""
    calibration_d = np.sort(distances_to(spec, center, stack(spec, samples.calibration)))
    if not candidates:
        return []
    candidate_d = distances_to(spec, center, stack(spec, candidates))
    return [_ball_report(d, calibration_d, config) for d in candidate_d]


def ball_region(
    theta: Any,
    center: Any,
    samples: SampleSet,
    config: ConformalConfig,
    spec: MetricSpec,
) -> ConformalReport:
    return ball_test([theta], center, samples, config, spec)[0]


def region_summary(table: ScoreTable, config: ConformalConfig) -> Dict[str, Any]:
    """Threshold rank, threshold score and how many calibration samples the region keeps."""
    k = threshold_rank(config.alpha, table.N)
    if k < 1:
        return {"threshold_rank": 0, "threshold_score": -math.inf,
                "n_inside": table.N, "n_calibration": table.N, "degenerate": True}
    threshold = float(table.sorted_scores[k - 1])
    n_inside = table.N - int(np.searchsorted(table.sorted_scores, threshold, side="left"))
    return {"threshold_rank": k, "threshold_score": threshold,
            "n_inside": n_inside, "n_calibration": table.N, "degenerate": False}


def concentration_certificate(
    table: ScoreTable,
    config: ConformalConfig,
    delta: float,
) -> ConcentrationCertificate:
    """
    High-probability bound on |Pi(region) - (1 - alpha)|: rank rounding, the
    empirical jump at s_(k) and the DKW deviation. The jump term is the
    multiplicity of s_(k) over N (1/N when scores are distinct).

    coverage_low and coverage_high bracket the coverage with probability
    1 - delta when scores are continuous: it then follows Beta(N + 1 - k, k).
    """
    if not 0 < delta < 1:
        raise InvalidConfig(f"delta must lie in (0, 1), got {delta}")
    n = table.N
    alpha = config.alpha
    k = min(max(threshold_rank(alpha, n), 1), n)
    threshold = float(table.sorted_scores[k - 1])
    multiplicity = int(np.count_nonzero(table.scores == threshold))

    term_rank = max(alpha, 1 - alpha) / n
    term_jump = multiplicity / n
    term_dkw = math.sqrt(math.log(2 / delta) / (2 * n))
    law = beta(n + 1 - k, k)
    logger.debug("certificate: k=%d s_(k)=%r multiplicity=%d", k, threshold, multiplicity)
    return ConcentrationCertificate(
        alpha=alpha,
        N=n,
        delta=delta,
        threshold_rank=k,
        threshold_score=threshold,
        term_rank=term_rank,
        term_jump=term_jump,
        term_dkw=term_dkw,
        total_bound=term_rank + term_jump + term_dkw,
        continuous_bound=(1 + max(alpha, 1 - alpha)) / n + term_dkw,
        coverage_low=float(law.ppf(delta / 2)),
        coverage_high=float(law.ppf(1 - delta / 2)),
    )
