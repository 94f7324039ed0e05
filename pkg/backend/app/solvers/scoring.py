"""
D-KDE conformity scores and the pseudo-MAP point estimate.

    s(theta; train) = (1/S) * sum_t exp(-gamma * D(theta, theta_t))

Scores are averaged with ``math.fsum`` (exactly rounded), so a score does not
depend on thread count or on the order of the training set.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np

from backend.app.config import DEFAULT_GAMMA, DEFAULT_SEED
from backend.app.errors import (
    EmptyTrainingSet,
    InvalidBandwidth,
    InvalidSplit,
    InvalidSubsample,
    MetricMismatch,
    NoCandidate,
    ValidationError,
)
from backend.app.solvers.metric import MetricSpec, ParameterBlock, distances_to, stack
from backend.app.solvers.parallel import map_ordered, resolve_threads
from backend.app.solvers.partition import Partition

logger = logging.getLogger(__name__)

# spawn-key families of the subsampling seed stream
CALIBRATION_STREAM = 0
CANDIDATE_STREAM = 1
TRAINING_STREAM = 2


@dataclass(frozen=True)
class SampleSet:
    """Ordered parameters; the first ``split_index`` are training, the rest calibration."""

    parameters: Tuple[Any, ...]
    split_index: int
    split_policy: Dict[str, Any] = field(default_factory=dict)
    source_order: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "parameters", tuple(self.parameters))
        total = len(self.parameters)
        if not 1 <= self.split_index < total:
            raise InvalidSplit(
                f"split gives S={self.split_index}, N={total - self.split_index}; both must be >= 1"
            )

    @property
    def T(self) -> int:
        return len(self.parameters)

    @property
    def S(self) -> int:
        return self.split_index

    @property
    def N(self) -> int:
        return self.T - self.split_index

    @property
    def train(self) -> Tuple[Any, ...]:
        return self.parameters[: self.split_index]

    @property
    def calibration(self) -> Tuple[Any, ...]:
        return self.parameters[self.split_index:]


@dataclass(frozen=True, eq=False)
class ScoreTable:
    scores: np.ndarray
    gamma: float
    subsample_size: Optional[int] = None
    seed: Optional[int] = None

    def __post_init__(self):
        scores = np.array(self.scores, dtype=np.float64).reshape(-1)
        if scores.size == 0:
            raise ValidationError("a score table needs at least one score")
        if np.any(scores < 0) or np.any(scores > 1) or not np.all(np.isfinite(scores)):
            raise ValidationError("D-KDE scores must lie in (0, 1]")
        if not self.gamma > 0:
            raise InvalidBandwidth(f"gamma must be positive, got {self.gamma}")
        scores.setflags(write=False)
        object.__setattr__(self, "scores", scores)

    @property
    def N(self) -> int:
        return int(self.scores.size)

    @cached_property
    def sorted_scores(self) -> np.ndarray:
        return np.sort(self.scores)

    def restrict(self, mask: np.ndarray) -> "ScoreTable":
        return ScoreTable(self.scores[np.asarray(mask, dtype=bool)], self.gamma,
                          self.subsample_size, self.seed)


@dataclass(frozen=True)
class PartitionFilter:
    """Declarative predicate on partition statistics (cluster count bounds)."""

    max_k: Optional[int] = None
    min_k: Optional[int] = None

    def __call__(self, item: Any) -> bool:
        if not isinstance(item, Partition):
            raise MetricMismatch("cluster-count filters apply to partitions only")
        if self.max_k is not None and item.k > self.max_k:
            return False
        if self.min_k is not None and item.k < self.min_k:
            return False
        return True

    def to_dict(self) -> Dict[str, Optional[int]]:
        return {"max_k": self.max_k, "min_k": self.min_k}


Filter = Callable[[Any], bool]


def kernel(gamma: float, d: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """Exponential kernel exp(-gamma * d)."""
    if not gamma > 0:
        raise InvalidBandwidth(f"gamma must be positive, got {gamma}")
    arr = np.asarray(d, dtype=np.float64)
    if np.any(arr < 0):
        raise ValidationError("distances must be non-negative")
    out = np.exp(-gamma * arr)
    return float(out) if out.ndim == 0 else out


def subsample_rows(
    train_size: int,
    subsample_size: Optional[int],
    seed: Optional[int],
    family: int,
    index: int,
) -> np.ndarray:
    """Training rows used for one score: all of them, or a seeded subset in ascending order."""
    if subsample_size is None or subsample_size == train_size:
        return np.arange(train_size)
    seq = np.random.SeedSequence(DEFAULT_SEED if seed is None else seed, spawn_key=(family, index))
    rng = np.random.default_rng(seq)
    return np.sort(rng.choice(train_size, size=subsample_size, replace=False))


def _check_subsample(subsample_size: Optional[int], train_size: int) -> None:
    if subsample_size is None:
        return
    if subsample_size < 1 or subsample_size > train_size:
        raise InvalidSubsample(f"subsample size {subsample_size} outside 1..{train_size}")


def _mean_kernel(spec: MetricSpec, theta: Any, block: ParameterBlock, gamma: float) -> float:
    values = kernel(gamma, distances_to(spec, theta, block))
    return math.fsum(np.atleast_1d(values)) / len(block)


def score(
    theta: Any,
    train: Union[Sequence[Any], ParameterBlock],
    spec: MetricSpec,
    gamma: float = DEFAULT_GAMMA,
) -> float:
    """D-KDE score of one parameter against a training (sub)set."""
    block = train if isinstance(train, ParameterBlock) else stack(spec, train)
    if len(block) == 0:
        raise EmptyTrainingSet("cannot score against an empty training set")
    if not gamma > 0:
        raise InvalidBandwidth(f"gamma must be positive, got {gamma}")
    return _mean_kernel(spec, theta, block, gamma)


def score_candidates(
    candidates: Sequence[Any],
    train_block: ParameterBlock,
    spec: MetricSpec,
    gamma: float,
    subsample_size: Optional[int] = None,
    seed: Optional[int] = None,
    family: int = CANDIDATE_STREAM,
    threads: Optional[int] = None,
) -> np.ndarray:
    """Score many parameters with the subsampling policy of a table; index i uses stream (family, i)."""
    if len(train_block) == 0:
        raise EmptyTrainingSet("cannot score against an empty training set")
    _check_subsample(subsample_size, len(train_block))

    def one(i: int) -> float:
        rows = subsample_rows(len(train_block), subsample_size, seed, family, i)
        block = train_block if rows.size == len(train_block) else train_block.take(rows)
        return score(candidates[i], block, spec, gamma)

    return np.array(map_ordered(one, range(len(candidates)), threads=threads), dtype=np.float64)


def score_calibration(
    samples: SampleSet,
    spec: MetricSpec,
    gamma: float = DEFAULT_GAMMA,
    subsample_size: Optional[int] = None,
    seed: Optional[int] = None,
    threads: Optional[int] = None,
) -> ScoreTable:
    n_threads = resolve_threads(threads)
    start = time.perf_counter()
    train_block = stack(spec, samples.train)
    scores = score_candidates(
        samples.calibration, train_block, spec, gamma,
        subsample_size=subsample_size, seed=seed,
        family=CALIBRATION_STREAM, threads=n_threads,
    )
    logger.info("scored N=%d calibration samples against S=%d (gamma=%g) in %.2fs on %d threads",
                samples.N, samples.S, gamma, time.perf_counter() - start, n_threads)
    return ScoreTable(scores, gamma, subsample_size, seed)


def point_estimate(
    samples: SampleSet,
    table: ScoreTable,
    filter: Optional[Filter] = None,
) -> Tuple[int, Any]:
    """Calibration sample with the highest score (lowest index on ties)."""
    if table.N != samples.N:
        raise ValidationError(f"score table has {table.N} scores for {samples.N} calibration samples")
    calibration = samples.calibration
    if filter is None:
        mask = np.ones(table.N, dtype=bool)
    else:
        mask = np.array([bool(filter(item)) for item in calibration], dtype=bool)
    if not mask.any():
        raise NoCandidate("no calibration sample passes the filter")
    masked = np.where(mask, table.scores, -np.inf)
    index = int(np.argmax(masked))
    return index, calibration[index]


def training_center(
    train: Sequence[Any],
    spec: MetricSpec,
    gamma: float = DEFAULT_GAMMA,
    subsample_size: Optional[int] = None,
    seed: Optional[int] = None,
    threads: Optional[int] = None,
) -> Tuple[int, Any]:
    """
    D-KDE maximiser within the training set, usable as a ball centre that
    depends on the training draws only. Without subsampling, each training
    sample's own kernel term (always 1) shifts every score by the same 1/S, so
    the argmax matches the leave-one-out maximiser.
    """
    block = stack(spec, train)
    scores = score_candidates(train, block, spec, gamma, subsample_size, seed,
                              family=TRAINING_STREAM, threads=threads)
    index = int(np.argmax(scores))
    return index, train[index]
