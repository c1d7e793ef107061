"""Attention-map and feature-map containers.

An attention map is the row-stochastic matrix of softmax weights from M
query tokens to N key tokens; it doubles as the adjacency matrix of the
token graph used by the scoring algorithm. A feature map is the token
grid those weights refer to, either complete (``height * width`` rows) or
pruned down to a retained-index subset.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatchError,
    EmptyStackError,
    NegativeEntryError,
    NonFiniteEntryError,
    RowSumError,
)

# Accepted deviation of a row sum from 1 (softmax rounding budget).
ROW_SUM_TOLERANCE = 1e-5
# Rows already within this band are passed through untouched, which makes
# validation exactly idempotent: renormalized rows land inside the band.
_RENORM_SKIP = 1e-12


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class AttentionMap:
    """Validated row-stochastic M x N matrix. Build via :func:`validate_attention`."""

    entries: np.ndarray

    @property
    def m(self) -> int:
        return self.entries.shape[0]

    @property
    def n(self) -> int:
        return self.entries.shape[1]

    @property
    def is_self_attention(self) -> bool:
        return self.m == self.n


@dataclass(frozen=True)
class HeadStack:
    """Per-head attention maps of one layer; all heads share (m, n)."""

    heads: tuple[AttentionMap, ...]

    def __post_init__(self):
        if not self.heads:
            raise EmptyStackError("head stack is empty")
        m, n = self.heads[0].m, self.heads[0].n
        for h, amap in enumerate(self.heads):
            if (amap.m, amap.n) != (m, n):
                raise DimensionMismatchError(
                    f"head {h} is {amap.m}x{amap.n}, expected {m}x{n}"
                )

    @property
    def head_count(self) -> int:
        return len(self.heads)

    @property
    def m(self) -> int:
        return self.heads[0].m

    @property
    def n(self) -> int:
        return self.heads[0].n


def validate_attention(raw: np.ndarray) -> AttentionMap:
    """Check a raw matrix against the softmax-row contract and wrap it.

    Entries must be finite and non-negative and every row must sum to 1
    within ``ROW_SUM_TOLERANCE``; out-of-band rows inside the tolerance are
    renormalized so downstream mass-conservation holds.
    """
    entries = np.array(raw, dtype=np.float64)
    if entries.ndim != 2 or entries.size == 0:
        raise DimensionMismatchError("attention map must be a non-empty 2-D matrix")
    bad = ~np.isfinite(entries)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise NonFiniteEntryError((int(i), int(j)))
    neg = entries < 0
    if neg.any():
        i, j = np.argwhere(neg)[0]
        raise NegativeEntryError((int(i), int(j)))
    sums = entries.sum(axis=1)
    off = np.abs(sums - 1.0)
    worst = int(np.argmax(off))
    # Tiny relative headroom so a deviation of exactly the tolerance is
    # accepted despite binary rounding of the inputs.
    if off[worst] > ROW_SUM_TOLERANCE * (1.0 + 1e-9):
        raise RowSumError(worst, float(sums[worst]))
    fix = off > _RENORM_SKIP
    if fix.any():
        entries[fix] /= sums[fix, None]
    return AttentionMap(_readonly(entries))


def stack_heads(maps: list[np.ndarray] | np.ndarray) -> HeadStack:
    """Validate an (H, m, n) array or list of matrices into a HeadStack."""
    return HeadStack(tuple(validate_attention(m) for m in maps))


def average_heads(stack: HeadStack) -> AttentionMap:
    """Elementwise arithmetic mean across heads.

    The per-entry summands are sorted before adding so the result is
    bit-identical under any permutation of the heads.
    """
    stacked = np.stack([h.entries for h in stack.heads])
    mean = np.sort(stacked, axis=0).sum(axis=0) / stack.head_count
    return AttentionMap(_readonly(mean))


def map_variance(amap: AttentionMap) -> float:
    """Population variance over all m*n entries (divides by m*n)."""
    return float(np.var(amap.entries))


@dataclass(frozen=True)
class FeatureMap:
    """Token grid of channel vectors, complete or pruned.

    ``values`` holds one row per token in row-major grid order; a pruned
    map keeps only the rows listed (strictly increasing) in ``index_map``.
    """

    height: int
    width: int
    values: np.ndarray
    index_map: np.ndarray | None = field(default=None)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise DimensionMismatchError("feature values must be (tokens, channels)")
        object.__setattr__(self, "values", _readonly(values.copy()))
        total = self.height * self.width
        if self.index_map is None:
            if values.shape[0] != total:
                raise DimensionMismatchError(
                    f"complete map needs {total} rows, got {values.shape[0]}"
                )
        else:
            idx = np.asarray(self.index_map, dtype=np.int64)
            if idx.ndim != 1 or idx.shape[0] != values.shape[0]:
                raise DimensionMismatchError("index_map length must match row count")
            if idx.shape[0] > total or (idx.shape[0] > 1 and not (np.diff(idx) > 0).all()):
                raise DimensionMismatchError("index_map must be strictly increasing")
            if idx.shape[0] and (idx[0] < 0 or idx[-1] >= total):
                raise DimensionMismatchError("index_map entry outside the grid")
            object.__setattr__(self, "index_map", _readonly(idx.copy()))

    @property
    def channels(self) -> int:
        return self.values.shape[1]

    @property
    def is_complete(self) -> bool:
        return self.index_map is None

    @property
    def total(self) -> int:
        return self.height * self.width
