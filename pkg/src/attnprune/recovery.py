"""Reconstruct complete feature maps from pruned ones.

Convolution downstream needs a full token grid, so pruned positions must
be filled before the next ResNet block. The preferred method copies, for
each pruned token, the retained token that sends it the most attention in
the head-averaged self-attention map (rows of pruned tokens are discarded
first so a pruned token can never be chosen as a source). Zero-padding,
bicubic interpolation, and direct copy of the cached pre-pruning values
are kept as baselines.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatchError, GridTooSmallError, OddDimensionsError
from .maps import AttentionMap, FeatureMap
from .masks import PruneMask

# Catmull-Rom bicubic (a = -0.5), sampled at (o + 0.5) / 2 - 0.5 with
# edge-clamped taps; downsampling averages each 2x2 cell.
_BICUBIC_A = -0.5


def _check_pruned(pruned: FeatureMap, mask: PruneMask) -> np.ndarray:
    if pruned.is_complete:
        if mask.total != pruned.total or len(mask.retained) != pruned.total:
            raise DimensionMismatchError("complete input needs an all-retaining mask")
        return np.asarray(mask.retained)
    if mask.total != pruned.total:
        raise DimensionMismatchError(
            f"mask covers {mask.total} tokens, grid has {pruned.total}"
        )
    if not np.array_equal(pruned.index_map, mask.retained):
        raise DimensionMismatchError("feature index_map does not match mask")
    return np.asarray(mask.retained)


def recover_zero_pad(pruned: FeatureMap, mask: PruneMask) -> FeatureMap:
    """Retained rows pass through; pruned rows are all-zero."""
    retained = _check_pruned(pruned, mask)
    out = np.zeros((pruned.total, pruned.channels))
    out[retained] = pruned.values
    return FeatureMap(pruned.height, pruned.width, out)


def recover_direct_copy(
    pruned: FeatureMap, mask: PruneMask, cached: FeatureMap
) -> FeatureMap:
    """Fill pruned rows verbatim from a complete map cached before pruning."""
    retained = _check_pruned(pruned, mask)
    if not cached.is_complete:
        raise DimensionMismatchError("cached map must be complete")
    if (cached.height, cached.width, cached.channels) != (
        pruned.height,
        pruned.width,
        pruned.channels,
    ):
        raise DimensionMismatchError("cached map shape differs from pruned map")
    out = cached.values.copy()
    out[retained] = pruned.values
    return FeatureMap(pruned.height, pruned.width, out)


def recover_similarity_copy(
    pruned: FeatureMap, mask: PruneMask, attn_avg: AttentionMap
) -> FeatureMap:
    """Fill each pruned token with a copy of its most-attending retained token.

    ``attn_avg`` is the head-averaged self-attention map of the scoring
    layer, taken before pruning. For pruned position b the source is the
    retained row index maximizing ``attn_avg[i, b]`` (ties to the lower
    index); the copied value is that token's post-attention row.
    """
    retained = _check_pruned(pruned, mask)
    if not attn_avg.is_self_attention or attn_avg.n != pruned.total:
        raise DimensionMismatchError(
            f"need a {pruned.total}x{pruned.total} self-attention map, "
            f"got {attn_avg.m}x{attn_avg.n}"
        )
    assert len(retained) >= 1, "mask invariant guarantees a non-empty retained set"
    out = np.zeros((pruned.total, pruned.channels))
    out[retained] = pruned.values
    missing = mask.pruned
    if missing.size:
        # Rows of pruned tokens are dropped before the argmax, so sources
        # always come from the retained set; np.argmax takes the first
        # (lowest-index) maximum.
        received = attn_avg.entries[np.ix_(retained, missing)]
        source = np.argmax(received, axis=0)
        out[missing] = pruned.values[source]
    return FeatureMap(pruned.height, pruned.width, out)


def _catmull_rom(t: np.ndarray) -> np.ndarray:
    s = np.abs(t)
    a = _BICUBIC_A
    near = (a + 2.0) * s**3 - (a + 3.0) * s**2 + 1.0
    far = a * s**3 - 5.0 * a * s**2 + 8.0 * a * s - 4.0 * a
    return np.where(s <= 1.0, near, np.where(s < 2.0, far, 0.0))


def _upsample_matrix(n_out: int) -> np.ndarray:
    """Row-stochastic (n_out, n_out/2) matrix applying the 1-D kernel."""
    n_in = n_out // 2
    weights = np.zeros((n_out, n_in))
    for o in range(n_out):
        x = (o + 0.5) / 2.0 - 0.5
        i0 = int(np.floor(x))
        for tap in range(i0 - 1, i0 + 3):
            w = float(_catmull_rom(np.asarray(x - tap)))
            weights[o, min(max(tap, 0), n_in - 1)] += w
    return weights


def recover_bicubic(pruned: FeatureMap, mask: PruneMask) -> FeatureMap:
    """Zero-fill, area-downsample by 2, bicubic-upsample back; keep retained rows.

    Only pruned positions take interpolated values. A pruned token whose
    entire downsample/upsample support is itself pruned comes back exactly
    zero, which is the known failure mode of interpolation at high ratios.
    """
    retained = _check_pruned(pruned, mask)
    h, w = pruned.height, pruned.width
    if h % 2 or w % 2:
        raise OddDimensionsError(f"grid {h}x{w} must have even sides")
    if h < 4 or w < 4:
        raise GridTooSmallError(f"grid {h}x{w} must be at least 4x4")
    grid = np.zeros((pruned.total, pruned.channels))
    grid[retained] = pruned.values
    grid = grid.reshape(h, w, pruned.channels)
    down = grid.reshape(h // 2, 2, w // 2, 2, -1).mean(axis=(1, 3))
    rows = _upsample_matrix(h)
    cols = _upsample_matrix(w)
    up = np.tensordot(rows, down, axes=([1], [0]))  # (h, w/2, c)
    up = np.tensordot(up, cols, axes=([1], [1])).transpose(0, 2, 1)  # (h, w, c)
    out = up.reshape(pruned.total, pruned.channels)
    out[retained] = pruned.values
    return FeatureMap(h, w, out)
