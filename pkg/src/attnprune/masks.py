"""Pruning-mask construction and application.

Masks keep the top-k tokens by importance score; ``k`` depends only on the
grid size and the pruning ratio, ties go to the lower index, and the
random baseline draws a uniform k-subset from a named counter-based
generator (Philox, keyed by the seed) so masks reproduce exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, RatioOutOfRangeError
from .maps import FeatureMap
from .pagerank import ImportanceScores


def retained_count(total: int, ratio: float) -> int:
    """Tokens kept at pruning ratio ``ratio``: max(1, ceil((1 - ratio) * total))."""
    if not 0.0 <= ratio < 1.0:
        raise RatioOutOfRangeError(ratio)
    return max(1, math.ceil((1.0 - ratio) * total))


@dataclass(frozen=True, eq=False)
class PruneMask:
    total: int
    retained: np.ndarray
    ratio: float

    def __eq__(self, other) -> bool:
        if not isinstance(other, PruneMask):
            return NotImplemented
        return (
            self.total == other.total
            and self.ratio == other.ratio
            and np.array_equal(self.retained, other.retained)
        )

    def __hash__(self):
        return hash((self.total, self.ratio, self.retained.tobytes()))

    def __post_init__(self):
        idx = np.asarray(self.retained, dtype=np.int64).copy()
        expect = retained_count(self.total, self.ratio)
        if idx.shape != (expect,):
            raise DimensionMismatchError(
                f"mask must retain {expect} of {self.total} tokens, got {idx.shape[0]}"
            )
        if idx.shape[0] > 1 and not (np.diff(idx) > 0).all():
            raise DimensionMismatchError("retained indices must be strictly increasing")
        if idx[0] < 0 or idx[-1] >= self.total:
            raise DimensionMismatchError("retained index outside the grid")
        idx.setflags(write=False)
        object.__setattr__(self, "retained", idx)

    @property
    def pruned(self) -> np.ndarray:
        """Complement of the retained set, ascending."""
        keep = np.zeros(self.total, dtype=bool)
        keep[self.retained] = True
        return np.flatnonzero(~keep)

    def to_json(self) -> str:
        return json.dumps(
            {"total": self.total, "ratio": self.ratio, "retained": self.retained.tolist()}
        )

    @classmethod
    def from_json(cls, text: str) -> "PruneMask":
        doc = json.loads(text)
        return cls(int(doc["total"]), np.asarray(doc["retained"]), float(doc["ratio"]))


def build_mask(scores: ImportanceScores, ratio: float) -> PruneMask:
    """Top-k mask over the scores; ties broken towards the lower index."""
    values = scores.values
    k = retained_count(len(values), ratio)
    # Stable sort on the negated scores keeps equal-scored tokens in index order.
    order = np.argsort(-values, kind="stable")
    retained = np.sort(order[:k])
    return PruneMask(len(values), retained, ratio)


def random_mask(total: int, ratio: float, seed: int) -> PruneMask:
    """Uniformly random k-subset; same (total, ratio, seed) gives the same mask.

    Generator: Philox keyed by ``seed`` driving a Fisher-Yates shuffle
    (one bounded draw per position, high ends total..2 descending).
    """
    if total < 1:
        raise DimensionMismatchError("total must be >= 1")
    k = retained_count(total, ratio)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    idx = np.arange(total, dtype=np.int64)
    if total > 1:
        draws = rng.integers(0, np.arange(total, 1, -1))
        for pos, j in enumerate(draws):
            i = total - 1 - pos
            idx[i], idx[j] = idx[j], idx[i]
    retained = np.sort(idx[:k])
    return PruneMask(total, retained, ratio)


def apply_mask(fmap: FeatureMap, mask: PruneMask) -> FeatureMap:
    """Keep exactly the retained rows, in grid order, values untouched."""
    if not fmap.is_complete:
        raise DimensionMismatchError("apply_mask needs a complete feature map")
    if mask.total != fmap.total:
        raise DimensionMismatchError(
            f"mask covers {mask.total} tokens, map has {fmap.total}"
        )
    return FeatureMap(
        fmap.height, fmap.width, fmap.values[mask.retained], index_map=mask.retained
    )
