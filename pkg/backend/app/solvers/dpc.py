"""
KDE density-peak analysis of calibration samples.

Samples are ranked by (score descending, index ascending); this total order
breaks exact score ties. For every sample, delta is the distance to the
nearest sample ranked above it; the top-ranked sample (the pseudo-MAP) gets
the largest distance to any other sample. Modes are samples with both a high
score and a large delta.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, replace
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np

from backend.app.config import DEFAULT_OUTLIER_DELTA_QUANTILE, DEFAULT_OUTLIER_SCORE_QUANTILE
from backend.app.errors import FormatError, InvalidConfig, InvalidModeCount, ValidationError
from backend.app.solvers.metric import DistanceMatrix
from backend.app.solvers.parallel import map_ordered
from backend.app.solvers.scoring import ScoreTable

logger = logging.getLogger(__name__)

NO_INDEX = -1
GRAPH_COLUMNS = ("index", "score", "delta", "k_clusters", "is_mode", "assignment", "is_outlier")


@dataclass(frozen=True)
class ModePolicy:
    """Either ``top_m`` fixed modes or the automatic largest-gap cut."""

    top_m: Optional[int] = None

    @property
    def auto_gap(self) -> bool:
        return self.top_m is None

    @classmethod
    def parse(cls, text: str) -> "ModePolicy":
        text = text.strip().lower()
        if text == "auto":
            return cls()
        if text.startswith("top:"):
            try:
                m = int(text[4:])
            except ValueError:
                raise InvalidConfig(f"bad mode policy {text!r}")
            if m < 1:
                raise InvalidModeCount("top:m needs m >= 1")
            return cls(top_m=m)
        raise InvalidConfig(f"mode policy must be 'auto' or 'top:m', got {text!r}")

    def __str__(self) -> str:
        return "auto" if self.auto_gap else f"top:{self.top_m}"


@dataclass(frozen=True, eq=False)
class DecisionGraph:
    scores: np.ndarray
    deltas: np.ndarray
    nearest_higher: np.ndarray
    modes: tuple = ()
    assignments: Optional[np.ndarray] = None
    weights: Optional[np.ndarray] = None
    outlier_flags: Optional[np.ndarray] = None
    k_clusters: Optional[np.ndarray] = None
    degenerate: bool = False

    @property
    def N(self) -> int:
        return int(self.scores.size)

    @property
    def top(self) -> int:
        return int(np.flatnonzero(self.nearest_higher == NO_INDEX)[0])

    def mode_weights(self) -> Dict[int, float]:
        if self.weights is None:
            return {}
        return {int(m): float(w) for m, w in zip(self.modes, self.weights)}


def rank_order(scores: np.ndarray) -> np.ndarray:
    """Indices sorted by score descending, index ascending."""
    scores = np.asarray(scores)
    return np.lexsort((np.arange(scores.size), -scores))


def compute_deltas(
    table: Union[ScoreTable, np.ndarray],
    distances: DistanceMatrix,
    threads: Optional[int] = None,
) -> DecisionGraph:
    scores = table.scores if isinstance(table, ScoreTable) else np.asarray(table, dtype=np.float64)
    n = scores.size
    if distances.size != n:
        raise ValidationError(f"distance matrix covers {distances.size} samples, scores cover {n}")
    if n == 0:
        raise ValidationError("decision graph needs at least one calibration sample")
    if n == 1:
        logger.warning("single calibration sample: delta set to 0")
        return DecisionGraph(scores=scores.copy(), deltas=np.zeros(1),
                             nearest_higher=np.array([NO_INDEX]), degenerate=True)

    order = rank_order(scores)
    rank = np.empty(n, dtype=np.int64)
    rank[order] = np.arange(n)
    entries = distances.entries

    def scan(i: int):
        if rank[i] == 0:
            return float(entries[i].max()), NO_INDEX
        row = np.where(rank < rank[i], entries[i], np.inf)
        j = int(np.argmin(row))
        return float(row[j]), j

    rows = map_ordered(scan, range(n), threads=threads)
    deltas = np.array([d for d, _ in rows])
    nearest = np.array([j for _, j in rows], dtype=np.int64)
    return DecisionGraph(scores=scores.copy(), deltas=deltas, nearest_higher=nearest)


def _normalise(values: np.ndarray) -> np.ndarray:
    lo, hi = float(values.min()), float(values.max())
    if hi == lo:
        return np.ones_like(values, dtype=np.float64)
    return (values - lo) / (hi - lo)


def decision_products(graph: DecisionGraph) -> np.ndarray:
    """Min-max normalised score times min-max normalised delta."""
    return _normalise(graph.scores) * _normalise(graph.deltas)


def detect_modes(graph: DecisionGraph, policy: ModePolicy) -> tuple:
    """Mode indices in candidate order; the top-ranked sample always comes first."""
    n = graph.N
    top = graph.top
    products = decision_products(graph)
    candidates = [i for i in np.lexsort((np.arange(n), -products)) if i != top]
    ranked = [top] + [int(i) for i in candidates]

    if not policy.auto_gap:
        if policy.top_m > n:
            raise InvalidModeCount(f"requested {policy.top_m} modes from {n} samples")
        return tuple(ranked[: policy.top_m])

    window = min(n, max(1, math.ceil(math.sqrt(n))))
    values = products[ranked[:window]]
    best_cut, best_gap = 1, 0.0
    for i in range(window - 1):
        if values[i] <= 0:
            break
        gap = (values[i] - values[i + 1]) / values[i]
        if gap > best_gap:
            best_cut, best_gap = i + 1, gap
    logger.debug("auto_gap: window=%d cut=%d relative gap=%.3f", window, best_cut, best_gap)
    return tuple(ranked[:best_cut])


def assign_clusters(
    graph: DecisionGraph,
    modes: Sequence[int],
    distances: DistanceMatrix,
    chained: bool = False,
    delta_quantile: float = DEFAULT_OUTLIER_DELTA_QUANTILE,
    score_quantile: float = DEFAULT_OUTLIER_SCORE_QUANTILE,
) -> DecisionGraph:
    """
    Attach cluster assignments, mode weights and outlier flags to a graph.

    Direct assignment sends every sample to its nearest mode (ties go to the
    lowest mode index); chained assignment follows nearest_higher links down
    from the modes, as in classic density-peak clustering.
    """
    if not modes:
        raise InvalidModeCount("at least one mode is required")
    modes = tuple(int(m) for m in modes)
    n = graph.N
    if any(not 0 <= m < n for m in modes):
        raise InvalidModeCount("mode index outside the calibration sample range")
    if not (0 < delta_quantile < 1 and 0 < score_quantile < 1):
        raise InvalidConfig("outlier quantiles must lie in (0, 1)")

    if chained:
        assignments = np.full(n, NO_INDEX, dtype=np.int64)
        for m in modes:
            assignments[m] = m
        for i in rank_order(graph.scores):
            if assignments[i] == NO_INDEX:
                parent = graph.nearest_higher[i]
                if parent == NO_INDEX:
                    raise ValidationError("the top-ranked sample must be a mode for chained assignment")
                assignments[i] = assignments[parent]
    else:
        ordered_modes = np.array(sorted(modes), dtype=np.int64)
        to_modes = distances.entries[:, ordered_modes]
        assignments = ordered_modes[np.argmin(to_modes, axis=1)]
        assignments[ordered_modes] = ordered_modes

    counts = np.array([np.count_nonzero(assignments == m) for m in modes])
    weights = counts / n

    delta_cut = np.quantile(graph.deltas, delta_quantile)
    score_cut = np.quantile(graph.scores, score_quantile)
    outliers = (graph.deltas > delta_cut) & (graph.scores < score_cut)
    return replace(graph, modes=modes, assignments=assignments,
                   weights=weights, outlier_flags=outliers)


def graph_records(graph: DecisionGraph) -> List[Dict[str, Any]]:
    mode_set = set(graph.modes)
    records = []
    for i in range(graph.N):
        records.append({
            "index": i,
            "score": float(graph.scores[i]),
            "delta": float(graph.deltas[i]),
            "k_clusters": None if graph.k_clusters is None else int(graph.k_clusters[i]),
            "is_mode": i in mode_set,
            "assignment": None if graph.assignments is None else int(graph.assignments[i]),
            "is_outlier": False if graph.outlier_flags is None else bool(graph.outlier_flags[i]),
        })
    return records


def _fmt_float(x: float) -> str:
    return format(x, ".17g")


def _csv_cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return _fmt_float(value)
    return str(value)


def export_decision_graph(graph: DecisionGraph, fmt: str = "csv") -> str:
    """Serialise one record per sample, columns fixed by GRAPH_COLUMNS."""
    records = graph_records(graph)
    if fmt == "jsonl":
        return "".join(json.dumps({c: r[c] for c in GRAPH_COLUMNS}) + "\n" for r in records)
    if fmt != "csv":
        raise InvalidConfig(f"unknown decision graph format {fmt!r}")
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(GRAPH_COLUMNS)
    for r in records:
        writer.writerow([_csv_cell(r[c]) for c in GRAPH_COLUMNS])
    return buffer.getvalue()


def _parse_bool(text: str, line: int) -> bool:
    if text in ("true", "false"):
        return text == "true"
    raise FormatError(f"expected true/false, got {text!r}", line)


def parse_decision_graph(text: str, fmt: str = "csv") -> List[Dict[str, Any]]:
    """Inverse of export_decision_graph, returning the records."""
    records = []
    if fmt == "jsonl":
        for line_no, line in enumerate(text.splitlines(), start=1):
            if line.strip():
                try:
                    records.append(json.loads(line))
                except json.JSONDecodeError as e:
                    raise FormatError(str(e), line_no)
        return records
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != GRAPH_COLUMNS:
        raise FormatError("missing decision graph header", 1)
    for line_no, row in enumerate(rows[1:], start=2):
        if len(row) != len(GRAPH_COLUMNS):
            raise FormatError(f"expected {len(GRAPH_COLUMNS)} columns, got {len(row)}", line_no)
        cell = dict(zip(GRAPH_COLUMNS, row))
        try:
            records.append({
                "index": int(cell["index"]),
                "score": float(cell["score"]),
                "delta": float(cell["delta"]),
                "k_clusters": int(cell["k_clusters"]) if cell["k_clusters"] else None,
                "is_mode": _parse_bool(cell["is_mode"], line_no),
                "assignment": int(cell["assignment"]) if cell["assignment"] else None,
                "is_outlier": _parse_bool(cell["is_outlier"], line_no),
            })
        except ValueError as e:
            if isinstance(e, FormatError):
                raise
            raise FormatError(str(e), line_no)
    return records


def analyse(
    table: ScoreTable,
    distances: DistanceMatrix,
    policy: ModePolicy = ModePolicy(),
    chained: bool = False,
    delta_quantile: float = DEFAULT_OUTLIER_DELTA_QUANTILE,
    score_quantile: float = DEFAULT_OUTLIER_SCORE_QUANTILE,
    k_clusters: Optional[Sequence[int]] = None,
    threads: Optional[int] = None,
) -> DecisionGraph:
    """compute_deltas, detect_modes and assign_clusters in one call."""
    graph = compute_deltas(table, distances, threads=threads)
    if k_clusters is not None:
        graph = replace(graph, k_clusters=np.asarray(k_clusters, dtype=np.int64))
    modes = detect_modes(graph, policy)
    graph = assign_clusters(graph, modes, distances, chained=chained,
                            delta_quantile=delta_quantile, score_quantile=score_quantile)
    logger.info("decision graph: N=%d, %d mode(s), weights=%s",
                graph.N, len(modes), np.round(graph.weights, 4).tolist())
    return graph
