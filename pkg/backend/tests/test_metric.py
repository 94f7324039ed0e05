import numpy as np
import pytest

from backend.app.errors import DimensionMismatch, MetricMismatch, SampleIndexError, ValidationError
from backend.app.solvers.metric import (
    DistanceMatrix,
    MetricSpec,
    distance,
    distances_to,
    pairwise_distances,
    stack,
)
from backend.app.solvers.partition import canonicalize, vi_distance


def test_distance_matrix_validation():
    """Asymmetric, non-zero-diagonal, negative and non-square matrices are rejected."""
    ok = DistanceMatrix([[0, 1], [1, 0]])
    assert ok.size == 2
    with pytest.raises(ValidationError):
        DistanceMatrix([[0, 1], [2, 0]])  # asymmetric
    with pytest.raises(ValidationError):
        DistanceMatrix([[1, 1], [1, 0]])  # nonzero diagonal
    with pytest.raises(ValidationError):
        DistanceMatrix([[0, -1], [-1, 0]])
    with pytest.raises(ValidationError):
        DistanceMatrix([[0, 1, 2], [1, 0, 3]])


def test_distance_matrix_tolerates_tiny_asymmetry():
    """Round-off asymmetry below the tolerance is accepted."""
    m = DistanceMatrix([[0, 1.0], [1.0 + 1e-13, 0]])
    assert m.size == 2


def test_euclidean_distance():
    """3-4-5 triangle; vector lengths must match."""
    spec = MetricSpec.euclidean()
    assert distance(spec, [0.0, 0.0], [3.0, 4.0]) == pytest.approx(5.0)
    with pytest.raises(DimensionMismatch):
        distance(spec, [0.0], [1.0, 2.0])


def test_vi_spec_matches_partition_module():
    """The VI metric delegates to the partition module."""
    spec = MetricSpec.vi()
    a, b = canonicalize([0, 0, 1, 1]), canonicalize([0, 1, 0, 1])
    assert distance(spec, a, b) == vi_distance(a, b)


def test_metric_mismatch():
    """Parameters of the wrong kind raise MetricMismatch."""
    with pytest.raises(MetricMismatch):
        distance(MetricSpec.vi(), [0, 1], [1, 0])
    with pytest.raises(MetricMismatch):
        distance(MetricSpec.euclidean(), canonicalize([0, 1]), canonicalize([0, 0]))


def test_precomputed_lookup_and_bounds():
    """Precomputed lookups and index bounds."""
    matrix = DistanceMatrix([[0, 2, 3], [2, 0, 4], [3, 4, 0]])
    spec = MetricSpec.precomputed(matrix)
    assert distance(spec, 0, 2) == 3.0
    np.testing.assert_array_equal(distances_to(spec, 1, stack(spec, [0, 1, 2])), [2, 0, 4])
    with pytest.raises(SampleIndexError):
        distance(spec, 0, 3)
    with pytest.raises(IndexError):
        distance(spec, -1, 0)


def test_precomputed_requires_matrix():
    """A precomputed metric without a matrix is invalid."""
    with pytest.raises(ValidationError):
        MetricSpec("precomputed")


def test_pairwise_distances_symmetric_and_thread_invariant():
    """Pairwise VI is symmetric, zero on the diagonal and identical on 1 or 4 threads."""
    rng = np.random.default_rng(3)
    items = [canonicalize(rng.integers(0, 4, size=30)) for _ in range(25)]
    one = pairwise_distances(MetricSpec.vi(), items, threads=1)
    many = pairwise_distances(MetricSpec.vi(), items, threads=4)
    np.testing.assert_array_equal(one.entries, many.entries)
    np.testing.assert_array_equal(one.entries, one.entries.T)
    assert np.all(np.diag(one.entries) == 0)
    assert one[3, 7] == pytest.approx(vi_distance(items[3], items[7]), abs=1e-12)


def test_pairwise_euclidean():
    """Pairwise Euclidean distances on three points of a line."""
    m = pairwise_distances(MetricSpec.euclidean(), [[0.0], [1.0], [3.0]], threads=2)
    np.testing.assert_allclose(m.entries, [[0, 1, 3], [1, 0, 2], [3, 2, 0]])


def test_restrict():
    """Restricting a matrix keeps the selected rows and columns."""
    m = DistanceMatrix([[0, 2, 3], [2, 0, 4], [3, 4, 0]])
    np.testing.assert_array_equal(m.restrict([0, 2]).entries, [[0, 3], [3, 0]])
