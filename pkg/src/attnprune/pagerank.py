"""Weighted-PageRank importance scoring on attention maps.

The attention map is read as the adjacency matrix of a directed token
graph and a score vector is power-iterated over it: each round pushes
query importance onto the keys (``s_K = A^T s_Q``), maps key importance
back to the queries, and L1-renormalizes. For self-attention the key and
query token sets coincide and the map-back step is the identity; for
cross-attention one of four key-to-query mappers is used.

Multi-head results are combined by an elementwise root mean square, which
rewards tokens that score very high in a few heads over tokens that score
moderately everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    AllZeroScoresError,
    DimensionMismatchError,
    EmptyInputError,
    LengthMismatchError,
    NegativeScoreError,
    ValidationError,
)
from .maps import AttentionMap


@dataclass(frozen=True)
class ImportanceScores:
    """Non-negative per-token scores; ``norm`` records the normalization applied."""

    values: np.ndarray
    norm: str = "l1"  # "l1" after an iteration / aggregation, "raw" otherwise

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1:
            raise DimensionMismatchError("scores must be a 1-D vector")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class SelfIdentity:
    """Self-attention case: key scores are query scores."""


@dataclass(frozen=True)
class Entropy:
    """Attention-weighted key mass divided by the row's attention entropy."""


@dataclass(frozen=True)
class HardClip:
    """Sum of key scores where attention clears the threshold ``eta``."""

    eta: float = 0.2

    def __post_init__(self):
        if not 0.0 < self.eta < 1.0:
            raise ValidationError(f"eta must be in (0, 1), got {self.eta!r}")


@dataclass(frozen=True)
class SoftClip:
    """Sigmoid-weighted variant of :class:`HardClip`."""

    eta: float = 0.2

    def __post_init__(self):
        if not 0.0 < self.eta < 1.0:
            raise ValidationError(f"eta must be in (0, 1), got {self.eta!r}")


@dataclass(frozen=True)
class Power:
    """Sum of ``(beta * s_K)^(alpha * A_ij)``; ``beta`` defaults to n_keys / 2."""

    alpha: float = 5.0
    beta: float | None = None

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValidationError(f"alpha must be > 0, got {self.alpha!r}")
        if self.beta is not None and self.beta <= 0:
            raise ValidationError(f"beta must be > 0, got {self.beta!r}")


Mapper = SelfIdentity | Entropy | HardClip | SoftClip | Power


@dataclass(frozen=True)
class ScoringOptions:
    epsilon: float = 1e-4  # L1 distance between successive score vectors
    max_iters: int = 50
    entropy_floor: float = 1e-12  # clamp for zero-entropy (one-hot) rows

    def __post_init__(self):
        if self.epsilon <= 0 or self.max_iters < 1 or self.entropy_floor <= 0:
            raise ValidationError("epsilon/entropy_floor must be > 0, max_iters >= 1")


@dataclass(frozen=True)
class ScoreResult:
    scores: ImportanceScores
    iterations: int
    converged: bool


def map_key_to_query(
    amap: AttentionMap,
    key_scores: ImportanceScores,
    mapper: Mapper,
    *,
    entropy_floor: float = 1e-12,
) -> ImportanceScores:
    """Translate key-token importance into (unnormalized) query-token importance."""
    a = amap.entries
    s = np.asarray(key_scores.values, dtype=np.float64)
    if s.shape[0] != amap.n:
        raise DimensionMismatchError(
            f"key scores have length {s.shape[0]}, map has {amap.n} keys"
        )
    if isinstance(mapper, SelfIdentity):
        if not amap.is_self_attention:
            raise DimensionMismatchError("identity mapping needs a square map")
        return ImportanceScores(s, norm=key_scores.norm)
    if isinstance(mapper, Entropy):
        # 0 * ln 0 is taken as 0; one-hot rows then hit the entropy floor.
        with np.errstate(divide="ignore", invalid="ignore"):
            logs = np.where(a > 0, np.log(np.where(a > 0, a, 1.0)), 0.0)
        entropy = -(a * logs).sum(axis=1)
        denom = np.maximum(entropy, entropy_floor)
        return ImportanceScores((a @ s) / denom, norm="raw")
    if isinstance(mapper, HardClip):
        gate = (a - mapper.eta >= 0).astype(np.float64)
        return ImportanceScores(gate @ s, norm="raw")
    if isinstance(mapper, SoftClip):
        gate = 1.0 / (1.0 + np.exp(-(a - mapper.eta)))
        return ImportanceScores(gate @ s, norm="raw")
    if isinstance(mapper, Power):
        if (s < 0).any():
            raise NegativeScoreError("power mapper needs non-negative key scores")
        beta = mapper.beta if mapper.beta is not None else amap.n / 2.0
        # Evaluated as exp(alpha * A_ij * ln(beta * s_j)) to avoid overflow;
        # terms with s_j == 0 are defined as 0.
        positive = s > 0
        out = np.zeros(amap.m, dtype=np.float64)
        if positive.any():
            log_bs = np.log(beta * s[positive])
            out = np.exp(mapper.alpha * a[:, positive] * log_bs[None, :]).sum(axis=1)
        return ImportanceScores(out, norm="raw")
    raise ValidationError(f"unknown mapper {mapper!r}")


def pagerank_scores(
    amap: AttentionMap,
    mapper: Mapper = SelfIdentity(),
    options: ScoringOptions = ScoringOptions(),
    *,
    initial: np.ndarray | None = None,
) -> ScoreResult:
    """Power-iterate importance scores over one attention map.

    Starts from the uniform distribution (``initial`` overrides it, mainly
    for scale-invariance experiments), runs at most ``max_iters`` rounds of
    push / map-back / L1-renormalize, and stops once the L1 distance
    between successive score vectors drops to ``epsilon``.
    """
    if isinstance(mapper, SelfIdentity) and not amap.is_self_attention:
        raise DimensionMismatchError("identity mapping needs a square map")
    if initial is None:
        s_q = np.full(amap.m, 1.0 / amap.m)
    else:
        s_q = np.asarray(initial, dtype=np.float64).copy()
        if s_q.shape != (amap.m,):
            raise DimensionMismatchError("initial scores must have one entry per query")
    at = amap.entries.T
    iterations = 0
    converged = False
    for _ in range(options.max_iters):
        s_k = at @ s_q
        s_new = map_key_to_query(
            amap, ImportanceScores(s_k, norm="raw"), mapper,
            entropy_floor=options.entropy_floor,
        ).values.copy()
        total = s_new.sum()
        if total <= 0 or not np.isfinite(total):
            raise AllZeroScoresError("mapper output has no mass to normalize")
        s_new /= total
        iterations += 1
        if np.abs(s_new - s_q).sum() <= options.epsilon:
            s_q = s_new
            converged = True
            break
        s_q = s_new
    return ScoreResult(ImportanceScores(s_q, norm="l1"), iterations, converged)


def aggregate_heads_rms(per_head: list[ImportanceScores]) -> ImportanceScores:
    """Elementwise root mean square across heads, L1-renormalized."""
    if not per_head:
        raise EmptyInputError("no per-head scores to aggregate")
    length = len(per_head[0])
    for h, scores in enumerate(per_head):
        if len(scores) != length:
            raise LengthMismatchError(
                f"head {h} has {len(scores)} scores, expected {length}"
            )
    stacked = np.stack([s.values for s in per_head])
    rms = np.sqrt(np.mean(stacked * stacked, axis=0))
    total = rms.sum()
    if total <= 0:
        raise AllZeroScoresError("aggregated scores have no mass")
    return ImportanceScores(rms / total, norm="l1")


def score_stack(
    heads: list[AttentionMap],
    mapper: Mapper = SelfIdentity(),
    options: ScoringOptions = ScoringOptions(),
) -> ImportanceScores:
    """Score every head independently and RMS-aggregate the results."""
    per_head = [pagerank_scores(h, mapper, options).scores for h in heads]
    return aggregate_heads_rms(per_head)
