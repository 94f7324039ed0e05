"""
Synthetic partition generators: uniformly random partitions for credible-set
size checks, and perturbed multimodal posteriors with known modes.
"""
from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass
from typing import Any, Dict, List, Mapping, Optional, Sequence

import numpy as np

from backend.app.errors import InvalidConfig
from backend.app.solvers.conformal import ConformalConfig, assess_candidates
from backend.app.solvers.metric import MetricSpec
from backend.app.solvers.partition import Partition, canonicalize
from backend.app.solvers.scoring import SampleSet, ScoreTable

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RandomPartitionSpec:
    n: int
    k_distribution: Mapping[int, float]
    seed: Optional[int] = None

    def __post_init__(self):
        if self.n < 1:
            raise InvalidConfig("n must be >= 1")
        if not self.k_distribution:
            raise InvalidConfig("k_distribution is empty")
        dist = {int(k): float(p) for k, p in self.k_distribution.items()}
        if any(not 1 <= k <= self.n for k in dist):
            raise InvalidConfig(f"cluster counts must lie in 1..{self.n}")
        if any(p < 0 for p in dist.values()) or not np.isclose(sum(dist.values()), 1.0, atol=1e-9):
            raise InvalidConfig("k_distribution must be a probability vector")
        object.__setattr__(self, "k_distribution", dict(sorted(dist.items())))


def empirical_k_distribution(partitions: Sequence[Partition]) -> Dict[int, float]:
    """Relative frequency of each cluster count."""
    counts = Counter(p.k for p in partitions)
    total = sum(counts.values())
    return {k: c / total for k, c in sorted(counts.items())}


def realized_k_distribution(partitions: Sequence[Partition]) -> Dict[int, float]:
    # draws can leave clusters empty, so the realised K may sit below the drawn K
    return empirical_k_distribution(partitions)


def random_partitions(spec: RandomPartitionSpec, count: int) -> List[Partition]:
    """Draw K from k_distribution, then label each item uniformly over K clusters."""
    if count < 1:
        raise InvalidConfig("count must be >= 1")
    rng = np.random.default_rng(spec.seed)
    ks = np.array(list(spec.k_distribution.keys()))
    probs = np.array(list(spec.k_distribution.values()))
    probs = probs / probs.sum()
    out = []
    for _ in range(count):
        k = int(rng.choice(ks, p=probs))
        out.append(canonicalize(rng.integers(0, k, size=spec.n)))
    return out


def perturbed_posterior(
    bases: Sequence[Partition],
    weights: Sequence[float],
    flip_count: int,
    size: int,
    seed: Optional[int] = None,
    first_s: Optional[int] = None,
) -> SampleSet:
    """
    Mixture of perturbed copies of ``bases``: pick a base by weight, move
    ``flip_count`` random items to random existing clusters of that base.
    The split defaults to half training, half calibration.
    """
    if not bases:
        raise InvalidConfig("at least one base partition is required")
    if len(weights) != len(bases):
        raise InvalidConfig("weights must match bases")
    w = np.asarray(weights, dtype=np.float64)
    if np.any(w < 0) or not np.isclose(w.sum(), 1.0, atol=1e-9):
        raise InvalidConfig("weights must be a probability vector")
    n = bases[0].n
    if any(b.n != n for b in bases):
        raise InvalidConfig("bases must share the item count")
    if not 0 <= flip_count < n:
        raise InvalidConfig(f"flip_count must lie in 0..{n - 1}")

    rng = np.random.default_rng(seed)
    draws = []
    for _ in range(size):
        base = bases[int(rng.choice(len(bases), p=w / w.sum()))]
        labels = base.labels.copy()
        if flip_count:
            items = rng.choice(n, size=flip_count, replace=False)
            labels[items] = rng.integers(0, base.k, size=flip_count)
        draws.append(canonicalize(labels))
    split = size // 2 if first_s is None else first_s
    return SampleSet(tuple(draws), split, {"first_s": split, "generator": "perturbed_posterior"})


def size_check(
    samples: SampleSet,
    table: ScoreTable,
    config: ConformalConfig,
    spec: MetricSpec,
    count: int = 1000,
    seed: Optional[int] = None,
    k_distribution: Optional[Mapping[int, float]] = None,
    threads: Optional[int] = None,
) -> Dict[str, Any]:
    """
    Test ``count`` random partitions against the credible region. K is drawn
    from the empirical cluster-count law of all samples unless given.
    """
    partitions = [p for p in samples.parameters if isinstance(p, Partition)]
    if len(partitions) != samples.T:
        raise InvalidConfig("size check applies to partition samples")
    law = dict(k_distribution) if k_distribution else empirical_k_distribution(partitions)
    draws = random_partitions(RandomPartitionSpec(partitions[0].n, law, seed), count)
    reports = assess_candidates(draws, samples, table, config, spec, threads=threads)
    excluded = sum(not r.in_region for r in reports)
    logger.info("size check: %d of %d random partitions excluded", excluded, count)
    return {
        "count": count,
        "n_excluded": excluded,
        "excluded_fraction": excluded / count,
        "alpha": config.alpha,
        "k_distribution": law,
        "realized_k_distribution": realized_k_distribution(draws),
    }
