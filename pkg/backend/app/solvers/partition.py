"""
Set partitions stored as canonical label vectors, and the Variation of
Information (VI) metric between them.

VI(a, b) = H(a) + H(b) - 2 I(a, b), in bits. With integer cluster counts it
reduces to

    VI = ( sum_j f(n_j.) + sum_k f(n_.k) - 2 sum_jk f(n_jk) ) / n,   f(c) = c log2 c,

with f(0) = 0.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from backend.app.errors import DimensionMismatch, EmptyPartition, ValidationError

# Upper bound on the cells of one joint count table in vi_to_many
MAX_JOINT_CELLS = 1 << 22


@dataclass(frozen=True, eq=False)
class Partition:
    """Canonical label vector: labels renumbered by first appearance."""

    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.ndim != 1 or labels.size == 0:
            raise EmptyPartition("a partition needs at least one item")
        if not np.array_equal(_first_appearance(labels), labels):
            raise ValidationError("labels are not in canonical form; use canonicalize()")
        labels = labels.copy()
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return int(self.labels.size)

    @property
    def k(self) -> int:
        return int(self.labels.max()) + 1

    def cluster_sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.k)

    def tolist(self) -> list:
        return self.labels.tolist()

    def __eq__(self, other) -> bool:
        if not isinstance(other, Partition):
            return NotImplemented
        return np.array_equal(self.labels, other.labels)

    def __hash__(self) -> int:
        return hash(self.labels.tobytes())

    def __repr__(self) -> str:
        return f"Partition(n={self.n}, k={self.k}, labels={self.labels.tolist()})"


@dataclass(frozen=True)
class ContingencyTable:
    counts: np.ndarray
    row_sums: np.ndarray
    col_sums: np.ndarray
    n: int

    def transpose(self) -> "ContingencyTable":
        return ContingencyTable(
            counts=self.counts.T.copy(),
            row_sums=self.col_sums,
            col_sums=self.row_sums,
            n=self.n,
        )


def _first_appearance(raw: np.ndarray) -> np.ndarray:
    _, first_index, inverse = np.unique(raw, return_index=True, return_inverse=True)
    rank = np.empty(first_index.size, dtype=np.int64)
    rank[np.argsort(first_index, kind="stable")] = np.arange(first_index.size)
    return rank[inverse.reshape(-1)]


def canonicalize(labels: Sequence[int]) -> Partition:
    """
    Renumber raw labels by first appearance.

    >>> canonicalize([5, 5, 2, 5, 2]).tolist()
    [0, 0, 1, 0, 1]
    """
    raw = np.asarray(labels)
    if raw.size == 0:
        raise EmptyPartition("cannot canonicalize an empty label sequence")
    if raw.ndim != 1:
        raise ValidationError("labels must be a one-dimensional sequence")
    if not np.issubdtype(raw.dtype, np.integer):
        if not (np.issubdtype(raw.dtype, np.number) and np.all(np.mod(raw, 1) == 0)):
            raise ValidationError("labels must be integers")
        raw = raw.astype(np.int64)
    return Partition(_first_appearance(raw))


def contingency(a: Partition, b: Partition) -> ContingencyTable:
    if a.n != b.n:
        raise DimensionMismatch(f"partitions have {a.n} and {b.n} items")
    pairs = Counter(zip(a.labels.tolist(), b.labels.tolist()))
    counts = np.zeros((a.k, b.k), dtype=np.int64)
    for (j, k), c in pairs.items():
        counts[j, k] = c
    return ContingencyTable(
        counts=counts,
        row_sums=counts.sum(axis=1),
        col_sums=counts.sum(axis=0),
        n=a.n,
    )


@lru_cache(maxsize=64)
def xlogx_table(n: int) -> np.ndarray:
    """f(c) = c log2 c for c = 0..n, with f(0) = 0."""
    c = np.arange(n + 1, dtype=np.float64)
    out = np.zeros(n + 1)
    out[1:] = c[1:] * np.log2(c[1:])
    out.setflags(write=False)
    return out


def vi_from_table(table: ContingencyTable) -> float:
    f = xlogx_table(table.n)
    terms = list(f[table.row_sums]) + list(f[table.col_sums])
    terms += list(-2.0 * f[table.counts[table.counts > 0]])
    # fsum is exactly rounded, so the result does not depend on term order
    return max(0.0, math.fsum(terms) / table.n)


def vi_distance(a: Partition, b: Partition) -> float:
    """Variation of Information between two partitions, in bits."""
    return vi_from_table(contingency(a, b))


def stack_labels(partitions: Sequence[Partition]) -> tuple:
    """Stack partitions of equal size into an (m, n) label matrix plus cluster counts."""
    if not partitions:
        return np.zeros((0, 0), dtype=np.int64), np.zeros(0, dtype=np.int64)
    n = partitions[0].n
    if any(p.n != n for p in partitions):
        raise DimensionMismatch("all partitions must have the same number of items")
    labels = np.vstack([p.labels for p in partitions])
    ks = labels.max(axis=1) + 1
    return labels, ks


def vi_to_many(
    a: Partition,
    block: np.ndarray,
    block_k: np.ndarray,
    max_cells: int = MAX_JOINT_CELLS,
) -> np.ndarray:
    """
    VI from ``a`` to every row of a stacked label block, vectorised.

    Each row is reduced independently with a fixed order (values sorted before
    summing), so a row's value never depends on which other rows share the block.
    Rows are processed in chunks whose joint table holds at most ``max_cells``
    cells (never fewer than one row per chunk).
    """
    m = block.shape[0]
    if m == 0:
        return np.zeros(0)
    n = a.n
    if block.shape[1] != n:
        raise DimensionMismatch(f"partitions have {n} and {block.shape[1]} items")
    kb = int(block_k.max())
    chunk = max(1, max_cells // (a.k * kb))
    if m <= chunk:
        return _vi_rows(a, block, kb)
    return np.concatenate([_vi_rows(a, block[i:i + chunk], kb) for i in range(0, m, chunk)])


def _vi_rows(a: Partition, block: np.ndarray, kb: int) -> np.ndarray:
    m, n = block.shape
    f = xlogx_table(n)
    ka = a.k
    rows = np.arange(m, dtype=np.int64)[:, None]

    joint_codes = a.labels[None, :] * kb + block + rows * (ka * kb)
    joint = np.bincount(joint_codes.ravel(), minlength=m * ka * kb).reshape(m, ka * kb)
    col_codes = block + rows * kb
    cols = np.bincount(col_codes.ravel(), minlength=m * kb).reshape(m, kb)

    a_term = math.fsum(f[a.cluster_sizes()])
    joint_term = np.sort(f[joint], axis=1).sum(axis=1)
    col_term = np.sort(f[cols], axis=1).sum(axis=1)

    vi = (a_term + col_term - 2.0 * joint_term) / n
    vi = np.maximum(vi, 0.0)
    vi[np.all(block == a.labels[None, :], axis=1)] = 0.0
    return vi
