"""
Glue shared by the CLI and the HTTP routers: metric selection, thinning and
splitting of raw draws, and plain-record views of pipeline results.
"""
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from backend.app.errors import InvalidConfig, ValidationError
from backend.app.solvers.metric import DistanceMatrix, MetricSpec
from backend.app.solvers.partition import Partition, canonicalize
from backend.app.solvers.sample_io import split_samples
from backend.app.solvers.scoring import PartitionFilter, SampleSet, ScoreTable, point_estimate
from backend.app.solvers.thinning import thin_samples


def metric_spec(name: str, matrix: Optional[DistanceMatrix] = None) -> MetricSpec:
    if name == "vi":
        return MetricSpec.vi()
    if name == "euclidean":
        return MetricSpec.euclidean()
    if name == "precomputed":
        if matrix is None:
            raise InvalidConfig("--metric precomputed reads a distance_csv input")
        return MetricSpec.precomputed(matrix)
    raise InvalidConfig(f"unknown metric {name!r}")


def parse_rows(rows: Sequence[Sequence[float]], metric: str) -> List[Any]:
    """Inline draws (HTTP payloads) as parameters of ``metric``."""
    if metric != "vi":
        return [np.asarray(row, dtype=np.float64) for row in rows]
    out = []
    for i, row in enumerate(rows):
        arr = np.asarray(row, dtype=np.float64)
        if not np.all(arr == np.round(arr)):
            raise ValidationError(f"draw {i} has non-integer labels")
        out.append(canonicalize(arr.astype(np.int64)))
    return out


def prepare_samples(
    items: Sequence[Any],
    split_first_s: Optional[int] = None,
    split_fraction: Optional[float] = None,
    seed: Optional[int] = None,
    thin: int = 1,
    burn_in: int = 0,
) -> SampleSet:
    """Burn-in and thinning, then the split; without a split setting the first half trains."""
    kept = thin_samples(items, thin, burn_in)
    if split_first_s is None and split_fraction is None:
        split_first_s = len(kept) // 2
    return split_samples(kept, first_s=split_first_s, fraction=split_fraction, seed=seed)


def partition_filter(max_k: Optional[int]) -> Optional[PartitionFilter]:
    return None if max_k is None else PartitionFilter(max_k=max_k)


def parameter_record(item: Any) -> Dict[str, Any]:
    if isinstance(item, Partition):
        return {"parameter": item.tolist(), "k_clusters": item.k}
    if isinstance(item, (int, np.integer)):
        return {"parameter": [int(item)], "k_clusters": None}
    return {"parameter": np.asarray(item, dtype=np.float64).tolist(), "k_clusters": None}


def estimate_record(samples: SampleSet, table: ScoreTable, max_k: Optional[int] = None) -> Dict[str, Any]:
    index, item = point_estimate(samples, table, partition_filter(max_k))
    return {"index": index, "score": float(table.scores[index]), **parameter_record(item)}
