"""
Uniform discrepancy D(a, b) over the three supported parameter representations:

- ``vi_partition``: Partition objects, VI in bits
- ``euclidean_vector``: real vectors, Euclidean norm of the difference
- ``precomputed``: integer sample indices into a validated DistanceMatrix
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from enum import Enum
from typing import Any, Optional, Sequence

import numpy as np

from backend.app.errors import DimensionMismatch, MetricMismatch, SampleIndexError, ValidationError
from backend.app.solvers.parallel import map_ordered, resolve_threads
from backend.app.solvers.partition import Partition, stack_labels, vi_distance, vi_to_many

logger = logging.getLogger(__name__)

SYMMETRY_TOLERANCE = 1e-12


class MetricKind(str, Enum):
    VI_PARTITION = "vi_partition"
    EUCLIDEAN_VECTOR = "euclidean_vector"
    PRECOMPUTED = "precomputed"


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    entries: np.ndarray

    def __post_init__(self):
        entries = np.array(self.entries, dtype=np.float64)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise ValidationError(f"distance matrix must be square, got shape {entries.shape}")
        if not np.all(np.isfinite(entries)):
            raise ValidationError("distance matrix contains non-finite entries")
        if np.any(entries < 0):
            raise ValidationError("distance matrix contains negative entries")
        if np.any(np.diag(entries) != 0):
            raise ValidationError("distance matrix must have a zero diagonal")
        if entries.size and np.max(np.abs(entries - entries.T)) > SYMMETRY_TOLERANCE:
            raise ValidationError("distance matrix is not symmetric")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @property
    def size(self) -> int:
        return int(self.entries.shape[0])

    def restrict(self, indices: Sequence[int]) -> "DistanceMatrix":
        idx = np.asarray(indices, dtype=np.int64)
        return DistanceMatrix(self.entries[np.ix_(idx, idx)])

    def __getitem__(self, key):
        return self.entries[key]


@dataclass(frozen=True)
class MetricSpec:
    kind: MetricKind
    matrix: Optional[DistanceMatrix] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", MetricKind(self.kind))
        if self.kind is MetricKind.PRECOMPUTED and self.matrix is None:
            raise ValidationError("precomputed metric requires a distance matrix")

    @classmethod
    def vi(cls) -> "MetricSpec":
        return cls(MetricKind.VI_PARTITION)

    @classmethod
    def euclidean(cls) -> "MetricSpec":
        return cls(MetricKind.EUCLIDEAN_VECTOR)

    @classmethod
    def precomputed(cls, matrix: DistanceMatrix) -> "MetricSpec":
        return cls(MetricKind.PRECOMPUTED, matrix)


@dataclass(frozen=True)
class ParameterBlock:
    """Items of one representation stacked for vectorised distance evaluation."""

    kind: MetricKind
    data: np.ndarray
    ks: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return int(self.data.shape[0])

    def take(self, rows: np.ndarray) -> "ParameterBlock":
        ks = None if self.ks is None else self.ks[rows]
        return ParameterBlock(self.kind, self.data[rows], ks)


def check_parameter(spec: MetricSpec, item: Any) -> Any:
    """Return ``item`` in the representation ``spec`` works with, or raise MetricMismatch."""
    if spec.kind is MetricKind.VI_PARTITION:
        if not isinstance(item, Partition):
            raise MetricMismatch(f"vi_partition expects a Partition, got {type(item).__name__}")
        return item
    if spec.kind is MetricKind.EUCLIDEAN_VECTOR:
        if isinstance(item, (Partition, bool)):
            raise MetricMismatch("euclidean_vector expects a real vector")
        vec = np.atleast_1d(np.asarray(item, dtype=np.float64))
        if vec.ndim != 1:
            raise MetricMismatch("euclidean_vector expects a one-dimensional vector")
        return vec
    if isinstance(item, (bool, np.bool_)) or not isinstance(item, (int, np.integer)):
        raise MetricMismatch(f"precomputed expects a sample index, got {type(item).__name__}")
    if not 0 <= int(item) < spec.matrix.size:
        raise SampleIndexError(f"sample index {item} outside 0..{spec.matrix.size - 1}")
    return int(item)


def stack(spec: MetricSpec, items: Sequence[Any]) -> ParameterBlock:
    items = [check_parameter(spec, item) for item in items]
    if spec.kind is MetricKind.VI_PARTITION:
        labels, ks = stack_labels(items)
        return ParameterBlock(spec.kind, labels, ks)
    if spec.kind is MetricKind.EUCLIDEAN_VECTOR:
        if not items:
            return ParameterBlock(spec.kind, np.zeros((0, 0)))
        dims = {v.size for v in items}
        if len(dims) != 1:
            raise DimensionMismatch(f"vectors have differing lengths {sorted(dims)}")
        return ParameterBlock(spec.kind, np.vstack(items))
    return ParameterBlock(spec.kind, np.asarray(items, dtype=np.int64))


def distances_to(spec: MetricSpec, theta: Any, block: ParameterBlock) -> np.ndarray:
    """D(theta, item) for every item of ``block``."""
    theta = check_parameter(spec, theta)
    if len(block) == 0:
        return np.zeros(0)
    if spec.kind is MetricKind.VI_PARTITION:
        return vi_to_many(theta, block.data, block.ks)
    if spec.kind is MetricKind.EUCLIDEAN_VECTOR:
        if theta.size != block.data.shape[1]:
            raise DimensionMismatch(f"vectors have lengths {theta.size} and {block.data.shape[1]}")
        diff = block.data - theta[None, :]
        return np.sqrt(np.einsum("ij,ij->i", diff, diff))
    return np.array(spec.matrix.entries[theta, block.data], dtype=np.float64)


def distance(spec: MetricSpec, a: Any, b: Any) -> float:
    if spec.kind is MetricKind.VI_PARTITION:
        return vi_distance(check_parameter(spec, a), check_parameter(spec, b))
    return float(distances_to(spec, a, stack(spec, [b]))[0])


def pairwise_distances(
    spec: MetricSpec,
    items: Sequence[Any],
    threads: Optional[int] = None,
) -> DistanceMatrix:
    """
    Full symmetric distance matrix. Row i computes the entries j > i and the
    lower triangle is mirrored, so symmetry and the zero diagonal are exact.
    """
    if len(items) == 0:
        raise ValidationError("pairwise_distances needs at least one item")
    n_threads = resolve_threads(threads)
    start = time.perf_counter()
    block = stack(spec, items)
    size = len(block)
    entries = np.zeros((size, size))

    def upper_row(i: int) -> np.ndarray:
        return distances_to(spec, items[i], block.take(np.arange(i + 1, size)))

    for i, row in enumerate(map_ordered(upper_row, range(size - 1), threads=n_threads)):
        entries[i, i + 1:] = row
        entries[i + 1:, i] = row

    logger.info("pairwise %s distances for %d items in %.2fs (%d threads)",
                spec.kind.value, size, time.perf_counter() - start, n_threads)
    return DistanceMatrix(entries)
