"""Synthetic attention maps and feature grids.

Stands in for a real denoiser at desk scale: rows are softmax samples of
scaled Gaussian logits, so ``concentration`` zero gives exactly uniform
maps and larger values give peakier, higher-variance maps (the same
qualitative sweep a denoiser traces across its steps).
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError
from .maps import AttentionMap, FeatureMap, HeadStack, _readonly

Seed = int | np.random.SeedSequence


def _rng(seed: Seed) -> np.random.Generator:
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(seed))


def substream(seed: int, *path: int) -> np.random.SeedSequence:
    """Independent, reproducible stream for (seed, step, block, ...) paths."""
    return np.random.SeedSequence([int(seed), *map(int, path)])


def synth_attention(
    n: int, heads: int, concentration: float, seed: Seed
) -> HeadStack:
    """Seeded stack of row-stochastic n x n self-attention maps."""
    if n < 1 or heads < 1:
        raise ValidationError("need n >= 1 and heads >= 1")
    if concentration < 0:
        raise ValidationError("concentration must be >= 0")
    logits = concentration * _rng(seed).standard_normal((heads, n, n))
    logits -= logits.max(axis=2, keepdims=True)
    rows = np.exp(logits)
    rows /= rows.sum(axis=2, keepdims=True)
    return HeadStack(tuple(AttentionMap(_readonly(h)) for h in rows))


def synth_features(
    height: int, width: int, channels: int, seed: Seed
) -> FeatureMap:
    """Seeded complete feature map with standard-normal channel vectors."""
    values = _rng(seed).standard_normal((height * width, channels))
    return FeatureMap(height, width, values)
