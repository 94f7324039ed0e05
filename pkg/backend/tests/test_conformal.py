import math

import numpy as np
import pytest

from backend.app.errors import FilterViolation, InvalidConfig, NoCandidate
from backend.app.solvers.conformal import (
    ConformalConfig,
    assess_candidates,
    ball_rank,
    ball_region,
    ball_test,
    concentration_certificate,
    conditional_region,
    conformal_p_value,
    region_membership,
    region_summary,
    threshold_rank,
)
from backend.app.solvers.metric import MetricSpec
from backend.app.solvers.partition import canonicalize
from backend.app.solvers.scoring import PartitionFilter, SampleSet, ScoreTable, score_calibration


def vector_samples(train, calibration):
    items = [np.array([float(x)]) for x in list(train) + list(calibration)]
    return SampleSet(tuple(items), len(train))


def test_config_rejects_bad_alpha():
    """alpha must lie strictly between 0 and 1."""
    for alpha in (0.0, 1.0, -0.2, 1.5):
        with pytest.raises(InvalidConfig):
            ConformalConfig(alpha)


def test_p_value_examples():
    """(#{s_i <= s} + 1) / (N + 1) on N = 9 evenly spaced scores."""
    scores = np.arange(1, 10) / 10.0  # N = 9
    assert conformal_p_value(2.0, scores) == 1.0
    assert conformal_p_value(0.0, scores) == pytest.approx(0.1)
    assert conformal_p_value(0.45, scores) == pytest.approx(0.5)
    # ties count toward the numerator
    assert conformal_p_value(0.4, scores) == pytest.approx(0.5)


def test_p_value_monotone_and_equivariant():
    """p is monotone in the score and unchanged by increasing transforms."""
    rng = np.random.default_rng(5)
    scores = rng.integers(0, 64, size=40) / 64.0
    probes = np.arange(-2, 70) / 64.0
    p = [conformal_p_value(x, scores) for x in probes]
    assert all(a <= b for a, b in zip(p, p[1:]))
    shifted = [conformal_p_value(x + 3.0, scores + 3.0) for x in probes]
    assert p == shifted
    cubed = [conformal_p_value(x ** 3, scores ** 3) for x in probes]
    assert p == cubed


def test_threshold_rank_examples():
    """Rank arithmetic for the KDE threshold and the ball radius."""
    assert threshold_rank(0.1, 999) == 99
    assert threshold_rank(0.1, 9) == 0
    assert threshold_rank(0.2, 9) == 1
    assert ball_rank(0.1, 9) == 9
    assert ball_rank(0.1, 99) == 90


def test_region_membership_below_all_scores():
    """A point below every calibration score gets p = 1/(N + 1) and is excluded."""
    samples = vector_samples([0.0], np.linspace(0, 1, 999))
    spec = MetricSpec.euclidean()
    table = score_calibration(samples, spec, gamma=0.5, threads=1)
    report = region_membership(np.array([10.0]), samples, table, ConformalConfig(0.1), spec)
    assert report.p_value == pytest.approx(0.001)
    assert not report.in_region
    assert report.threshold_rank == 99
    assert report.threshold_score == table.sorted_scores[98]


def test_region_membership_median_sample_inside():
    """The median calibration draw lies inside the 90% region."""
    samples = vector_samples([0.0], np.linspace(0, 1, 99))
    spec = MetricSpec.euclidean()
    table = score_calibration(samples, spec, threads=1)
    median = samples.calibration[49]
    report = region_membership(median, samples, table, ConformalConfig(0.1), spec)
    assert report.in_region
    assert report.p_value == pytest.approx(0.51)


def test_top_calibration_sample_has_p_value_one():
    """The highest-scoring calibration draw has p = 1."""
    samples = vector_samples([0.0, 0.1], [0.05, 0.5, 1.0, 2.0])
    spec = MetricSpec.euclidean()
    table = score_calibration(samples, spec, threads=1)
    report = assess_candidates([samples.calibration[0]], samples, table, ConformalConfig(0.1), spec)[0]
    assert report.p_value == 1.0 and report.in_region


def test_degenerate_threshold_when_alpha_tiny():
    """With alpha (N + 1) <= 1 the threshold rank is below 1 and the region is the whole space."""
    samples = vector_samples([0.0], [0.1, 0.2, 0.3, 0.4, 0.5])
    spec = MetricSpec.euclidean()
    table = score_calibration(samples, spec, threads=1)
    report = region_membership(np.array([50.0]), samples, table, ConformalConfig(0.1), spec)
    assert report.degenerate
    assert report.threshold_score == -math.inf
    assert report.in_region  # p >= 1/6 > 0.1


def partition_samples():
    train = [canonicalize([0, 0, 1, 1])] * 3
    calibration = [canonicalize(x) for x in ([0, 0, 1, 1], [0, 1, 2, 2], [0, 1, 2, 3], [0, 1, 1, 2])]
    return SampleSet(tuple(train + calibration), 3)


def test_conditional_region_always_true_filter_matches_membership():
    """A filter that keeps everything reduces to plain membership."""
    samples = partition_samples()
    spec = MetricSpec.vi()
    table = score_calibration(samples, spec, threads=1)
    theta = canonicalize([0, 1, 1, 1])
    config = ConformalConfig(0.3)
    assert conditional_region(theta, samples, table, config, spec, PartitionFilter()) == \
        region_membership(theta, samples, table, config, spec)


def test_conditional_region_single_kept_sample():
    """One calibration draw passes the filter, so N' = 1."""
    samples = partition_samples()
    spec = MetricSpec.vi()
    table = score_calibration(samples, spec, threads=1)
    report = conditional_region(canonicalize([0, 1, 1, 1]), samples, table, ConformalConfig(0.3), spec,
                                PartitionFilter(max_k=2))
    assert report.n_calibration == 1
    assert report.p_value == pytest.approx(0.5)


def test_conditional_region_errors():
    """Filter violations and empty filtered sets raise."""
    samples = partition_samples()
    spec = MetricSpec.vi()
    table = score_calibration(samples, spec, threads=1)
    config = ConformalConfig(0.1)
    with pytest.raises(FilterViolation):
        conditional_region(canonicalize([0, 1, 2, 2]), samples, table, config, spec, PartitionFilter(max_k=2))
    with pytest.raises(NoCandidate):
        conditional_region(canonicalize([0, 0, 0, 0]), samples, table, config, spec, PartitionFilter(max_k=1))


def test_conditional_region_counts_only_filtered_scores():
    """p is computed against the filtered calibration scores only."""
    rng = np.random.default_rng(6)
    parts = [canonicalize(rng.integers(0, rng.integers(1, 6), size=12)) for _ in range(120)]
    samples = SampleSet(tuple(parts), 60)
    spec = MetricSpec.vi()
    table = score_calibration(samples, spec, threads=1)
    flt = PartitionFilter(max_k=3)
    kept = np.array([s for s, p in zip(table.scores, samples.calibration) if p.k <= 3])
    theta = next(p for p in parts[:60] if p.k <= 3)
    report = conditional_region(theta, samples, table, ConformalConfig(0.1), spec, flt)
    assert report.n_calibration == kept.size
    assert report.p_value == pytest.approx(conformal_p_value(report.score, kept))


def test_ball_examples():
    """Ball radius is the rank-r calibration distance to the centre."""
    spec = MetricSpec.euclidean()
    config = ConformalConfig(0.1)
    samples = vector_samples([0.0], np.arange(1, 10, dtype=float))  # N = 9
    center = np.array([0.0])
    at_center = ball_region(center, center, samples, config, spec)
    assert at_center.in_region and at_center.distance == 0.0
    assert at_center.radius == 9.0  # rank 9 of 9

    unit = vector_samples([0.0], [1.0 if i % 2 else -1.0 for i in range(99)])
    far = ball_region(np.array([2.0]), center, unit, config, spec)
    assert far.radius == 1.0
    assert not far.in_region


def test_ball_whole_space_when_rank_exceeds_n():
    """Rank above N makes the ball the whole space."""
    samples = vector_samples([0.0], [1.0, 2.0, 3.0, 4.0, 5.0])
    report = ball_region(np.array([100.0]), np.array([0.0]), samples, ConformalConfig(0.1), MetricSpec.euclidean())
    assert report.degenerate and report.in_region
    assert report.radius == math.inf


@pytest.mark.parametrize("alpha", [0.13, 0.27, 0.41])
def test_ball_agrees_with_kde_rule_under_negated_distance(alpha):
    """Exhaustive small instances; alpha * (N + 1) is never an integer here."""
    rng = np.random.default_rng(7)
    spec = MetricSpec.euclidean()
    config = ConformalConfig(alpha)
    center = np.array([0.0])
    for n in range(1, 21):
        calibration = rng.integers(-6, 7, size=n).astype(float)
        samples = vector_samples([0.0], calibration)
        calib_scores = -np.abs(calibration)
        candidates = [np.array([float(x)]) for x in range(-8, 9)]
        for report, cand in zip(ball_test(candidates, center, samples, config, spec), candidates):
            p = conformal_p_value(-abs(cand[0]), calib_scores)
            assert report.in_region == (p >= alpha)
            assert report.p_value == pytest.approx(p)


def test_region_summary():
    """Threshold rank, score and the count of calibration draws inside."""
    table = ScoreTable(np.arange(1, 11) / 10.0, gamma=0.5)
    summary = region_summary(table, ConformalConfig(0.2))
    # k = ceil(0.2 * 11 - 1) = 2
    assert summary["threshold_rank"] == 2
    assert summary["threshold_score"] == 0.2
    assert summary["n_inside"] == 9


def test_certificate_distinct_scores():
    """Rank, jump and DKW terms for 1000 distinct scores."""
    table = ScoreTable((np.arange(1000) + 0.5) / 1000, gamma=0.5)
    cert = concentration_certificate(table, ConformalConfig(0.1), 0.05)
    assert cert.term_rank == pytest.approx(0.0009)
    assert cert.term_jump == pytest.approx(0.001)
    assert cert.term_dkw == pytest.approx(math.sqrt(math.log(40) / 2000))
    assert cert.term_dkw == pytest.approx(0.0429, abs=1e-4)
    assert cert.total_bound == pytest.approx(cert.term_rank + cert.term_jump + cert.term_dkw)
    assert cert.continuous_bound == pytest.approx(1.9 / 1000 + cert.term_dkw)


def test_certificate_single_atom_and_delta_limit():
    """All scores tied: the jump term is 1."""
    table = ScoreTable(np.full(50, 0.5), gamma=0.5)
    cert = concentration_certificate(table, ConformalConfig(0.1), 0.999999)
    assert cert.term_jump == 1.0
    assert cert.term_dkw == pytest.approx(math.sqrt(math.log(2) / 100), rel=1e-5)
    with pytest.raises(InvalidConfig):
        concentration_certificate(table, ConformalConfig(0.1), 1.0)


def test_certificate_bounds_coverage_of_uniform_scores():
    """Region mass 1 - s_(k) under Uniform(0, 1) scores stays within the bound."""
    rng = np.random.default_rng(8)
    alpha, hits = 0.1, 0
    for _ in range(1000):
        table = ScoreTable(rng.random(1000), gamma=0.5)
        cert = concentration_certificate(table, ConformalConfig(alpha), 0.05)
        mass = 1.0 - cert.threshold_score
        hits += abs(mass - (1 - alpha)) <= cert.total_bound
    assert hits >= 950


def test_beta_coverage_interval():
    """The Beta interval brackets 1 - alpha and covers the realised mass at the 1 - delta rate."""
    table = ScoreTable((np.arange(2000) + 0.5) / 2000, gamma=0.5)
    cert = concentration_certificate(table, ConformalConfig(0.1), 0.05)
    assert cert.coverage_low < 0.9 < cert.coverage_high
    assert cert.coverage_high - cert.coverage_low < 2 * cert.term_dkw

    rng = np.random.default_rng(9)
    inside = 0
    for _ in range(1000):
        cert = concentration_certificate(ScoreTable(rng.random(500), gamma=0.5), ConformalConfig(0.1), 0.05)
        inside += cert.coverage_low <= 1.0 - cert.threshold_score <= cert.coverage_high
    assert inside >= 930
