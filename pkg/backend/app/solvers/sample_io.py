"""
Sample ingestion, train/calibration splits and result files.

Sample files are header-free CSV by default (one draw per row); ``header=True``
skips and writes one header line. Floats are written with 17 significant digits
so that a save/load cycle reproduces every double exactly.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from backend.app.config import DEFAULT_SEED
from backend.app.errors import FormatError, InvalidConfig, InvalidSplit
from backend.app.solvers.metric import DistanceMatrix
from backend.app.solvers.partition import Partition, canonicalize
from backend.app.solvers.scoring import SampleSet, ScoreTable

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


class SampleFormat(str, Enum):
    PARTITION_CSV = "partition_csv"
    VECTOR_CSV = "vector_csv"
    DISTANCE_CSV = "distance_csv"


@dataclass(frozen=True)
class SampleFile:
    format: SampleFormat
    path: PathLike
    header: bool = False
    row_count: Optional[int] = None
    column_count: Optional[int] = None

    def __post_init__(self):
        try:
            object.__setattr__(self, "format", SampleFormat(self.format))
        except ValueError:
            raise InvalidConfig(f"unknown sample format {self.format!r}")


def fmt_float(x: float) -> str:
    return format(float(x), ".17g")


def _read_rows(file: SampleFile) -> List[Tuple[int, List[str]]]:
    """Non-blank CSV rows with their 1-based line numbers; raises OSError for unreadable paths."""
    with open(file.path, newline="", encoding="utf-8") as handle:
        text = handle.read()
    reader = csv.reader(io.StringIO(text))
    rows = []
    width = None
    for row in reader:
        line = reader.line_num
        if file.header and line == 1:
            continue
        if not row or all(not cell.strip() for cell in row):
            continue
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise FormatError(f"expected {width} columns, got {len(row)}", line)
        rows.append((line, row))
    return rows


def _parse_int(cell: str, line: int) -> int:
    try:
        return int(cell.strip())
    except ValueError:
        raise FormatError(f"non-integer label {cell!r}", line)


def _parse_float(cell: str, line: int) -> float:
    try:
        value = float(cell.strip())
    except ValueError:
        raise FormatError(f"non-numeric cell {cell!r}", line)
    if not math.isfinite(value):
        raise FormatError(f"non-finite cell {cell!r}", line)
    return value


def load_distance_matrix(file: SampleFile) -> DistanceMatrix:
    rows = _read_rows(file)
    if not rows:
        raise FormatError("distance file is empty", 1)
    entries = [[_parse_float(c, line) for c in row] for line, row in rows]
    # DistanceMatrix raises ValidationError for non-square, asymmetric or bad-diagonal input
    return DistanceMatrix(np.array(entries, dtype=np.float64))


def load_samples(file: SampleFile) -> List[Any]:
    """
    Parameters stored in ``file``: canonical partitions, float vectors, or for
    ``distance_csv`` the sample indices 0..T-1 of the validated matrix.
    """
    if file.format is SampleFormat.DISTANCE_CSV:
        matrix = load_distance_matrix(file)
        logger.info("loaded %dx%d distance matrix from %s", matrix.size, matrix.size, file.path)
        return list(range(matrix.size))

    rows = _read_rows(file)
    if file.format is SampleFormat.PARTITION_CSV:
        items = [canonicalize([_parse_int(c, line) for c in row]) for line, row in rows]
    else:
        items = [np.array([_parse_float(c, line) for c in row]) for line, row in rows]
    logger.info("loaded %d %s rows from %s", len(items), file.format.value, file.path)
    return items


def describe(file: SampleFile, items: Sequence[Any]) -> SampleFile:
    """Copy of ``file`` with row and column counts filled in from loaded items."""
    if not items:
        return replace(file, row_count=0, column_count=0)
    first = items[0]
    if isinstance(first, Partition):
        width = first.n
    elif isinstance(first, np.ndarray):
        width = int(first.size)
    else:
        width = len(items)
    return replace(file, row_count=len(items), column_count=width)


def _format_rows(items: Sequence[Any], fmt: SampleFormat) -> List[List[str]]:
    if fmt is SampleFormat.PARTITION_CSV:
        return [[str(label) for label in p.tolist()] for p in items]
    return [[fmt_float(v) for v in np.asarray(row, dtype=np.float64)] for row in items]


def dumps_samples(items: Union[Sequence[Any], DistanceMatrix], fmt: SampleFormat, header: bool = False) -> str:
    fmt = SampleFormat(fmt)
    rows = _format_rows(items.entries if isinstance(items, DistanceMatrix) else items, fmt)
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    if header:
        prefix = "item" if fmt is SampleFormat.PARTITION_CSV else "x"
        width = len(rows[0]) if rows else 0
        writer.writerow([f"{prefix}_{j}" for j in range(width)])
    writer.writerows(rows)
    return buffer.getvalue()


def save_samples(items: Union[Sequence[Any], DistanceMatrix], path: PathLike,
                 fmt: SampleFormat, header: bool = False) -> None:
    Path(path).write_text(dumps_samples(items, fmt, header), encoding="utf-8")


def split_samples(
    items: Sequence[Any],
    first_s: Optional[int] = None,
    fraction: Optional[float] = None,
    seed: Optional[int] = None,
) -> SampleSet:
    """
    ``first_s`` keeps the input order (chain order for thinned MCMC output);
    ``fraction`` shuffles with ``seed`` and puts floor(fraction * T) draws in training.
    """
    if (first_s is None) == (fraction is None):
        raise InvalidConfig("give exactly one of first_s or fraction")
    total = len(items)
    if first_s is not None:
        return SampleSet(tuple(items), int(first_s), {"first_s": int(first_s)})

    if not 0 < fraction < 1:
        raise InvalidSplit(f"split fraction must lie in (0, 1), got {fraction}")
    seed = DEFAULT_SEED if seed is None else seed
    order = np.random.default_rng(seed).permutation(total)
    split = int(math.floor(fraction * total))
    return SampleSet(
        tuple(items[i] for i in order),
        split,
        {"fraction": fraction, "seed": seed},
        source_order=tuple(int(i) for i in order),
    )


# ---------------------------------------------------------------------------
# JSONL reports and score tables
# ---------------------------------------------------------------------------

def dumps_jsonl(records: Iterable[Dict[str, Any]]) -> str:
    return "".join(json.dumps(r) + "\n" for r in records)


def write_jsonl(records: Iterable[Dict[str, Any]], path: PathLike) -> None:
    Path(path).write_text(dumps_jsonl(records), encoding="utf-8")


def loads_jsonl(text: str) -> List[Dict[str, Any]]:
    records = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as e:
            raise FormatError(e.msg, line_no)
    return records


def read_jsonl(path: PathLike) -> List[Dict[str, Any]]:
    return loads_jsonl(Path(path).read_text(encoding="utf-8"))


def score_table_records(table: ScoreTable, samples: Optional[SampleSet] = None) -> List[Dict[str, Any]]:
    """Metadata line, then one record per calibration sample."""
    meta = {
        "gamma": table.gamma,
        "subsample_size": table.subsample_size,
        "seed": table.seed,
        "n_calibration": table.N,
    }
    if samples is not None:
        meta["split_index"] = samples.S
        meta["split_policy"] = samples.split_policy
    records = [meta]
    calibration = samples.calibration if samples is not None else [None] * table.N
    for i, (s, item) in enumerate(zip(table.scores, calibration)):
        record = {"index": i, "score": float(s)}
        if isinstance(item, Partition):
            record["k_clusters"] = item.k
        records.append(record)
    return records


def save_score_table(table: ScoreTable, path: PathLike, samples: Optional[SampleSet] = None) -> None:
    write_jsonl(score_table_records(table, samples), path)


def load_score_table(path: PathLike) -> ScoreTable:
    records = read_jsonl(path)
    if not records or "gamma" not in records[0]:
        raise FormatError("score file must start with a metadata record", 1)
    meta, rows = records[0], records[1:]
    if len(rows) != meta.get("n_calibration", len(rows)):
        raise FormatError(f"expected {meta['n_calibration']} scores, found {len(rows)}")
    indices = [r.get("index") for r in rows]
    if indices != list(range(len(rows))):
        raise FormatError("score records must be indexed 0..N-1 in order")
    try:
        return ScoreTable(np.array([r["score"] for r in rows], dtype=np.float64),
                          meta["gamma"], meta.get("subsample_size"), meta.get("seed"))
    except KeyError as e:
        raise FormatError(f"score record without {e.args[0]!r}")
