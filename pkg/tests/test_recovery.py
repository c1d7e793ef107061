import numpy as np
import pytest

from attnprune.errors import (
    DimensionMismatchError,
    GridTooSmallError,
    OddDimensionsError,
)
from attnprune.maps import FeatureMap, validate_attention
from attnprune.masks import PruneMask, apply_mask, build_mask
from attnprune.pagerank import ImportanceScores
from attnprune.recovery import (
    recover_bicubic,
    recover_direct_copy,
    recover_similarity_copy,
    recover_zero_pad,
)

from test_maps import random_stochastic


def reference_bicubic(grid: np.ndarray) -> np.ndarray:
    """Naive per-pixel Catmull-Rom resample: area-down by 2, bicubic up by 2.

    Deliberately scalar loops, independent of the separable implementation.
    """

    def kernel(t: float) -> float:
        s, a = abs(t), -0.5
        if s <= 1:
            return (a + 2) * s**3 - (a + 3) * s**2 + 1
        if s < 2:
            return a * s**3 - 5 * a * s**2 + 8 * a * s - 4 * a
        return 0.0

    h, w, c = grid.shape
    down = np.zeros((h // 2, w // 2, c))
    for i in range(h // 2):
        for j in range(w // 2):
            down[i, j] = grid[2 * i : 2 * i + 2, 2 * j : 2 * j + 2].mean(axis=(0, 1))
    out = np.zeros_like(grid)
    for i in range(h):
        for j in range(w):
            x = (i + 0.5) / 2 - 0.5
            y = (j + 0.5) / 2 - 0.5
            acc = np.zeros(c)
            for a in range(int(np.floor(x)) - 1, int(np.floor(x)) + 3):
                wa = kernel(x - a)
                ia = min(max(a, 0), h // 2 - 1)
                for b in range(int(np.floor(y)) - 1, int(np.floor(y)) + 3):
                    wb = kernel(y - b)
                    ib = min(max(b, 0), w // 2 - 1)
                    acc += wa * wb * down[ia, ib]
            out[i, j] = acc
    return out


def pruned_fixture(rng, height, width, channels, ratio):
    fmap = FeatureMap(height, width, rng.standard_normal((height * width, channels)))
    scores = ImportanceScores(rng.random(height * width), norm="raw")
    mask = build_mask(scores, ratio)
    return fmap, mask, apply_mask(fmap, mask)


class TestZeroPad:
    def test_nothing_pruned_is_identity(self):
        rng = np.random.default_rng(0)
        fmap, mask, pruned = pruned_fixture(rng, 2, 2, 3, 0.0)
        out = recover_zero_pad(pruned, mask)
        assert np.array_equal(out.values, fmap.values)

    def test_single_retained_row(self):
        e = np.asarray([[1.0, 2.0]])
        mask = PruneMask(4, np.asarray([0]), 0.75)
        pruned = FeatureMap(2, 2, e, index_map=[0])
        out = recover_zero_pad(pruned, mask)
        assert np.array_equal(out.values, np.vstack([e, np.zeros((3, 2))]))

    def test_output_is_complete(self):
        rng = np.random.default_rng(1)
        _, mask, pruned = pruned_fixture(rng, 3, 4, 2, 0.5)
        out = recover_zero_pad(pruned, mask)
        assert out.is_complete and out.values.shape == (12, 2)


class TestDirectCopy:
    def test_identity_when_cached_matches_and_nothing_pruned(self):
        rng = np.random.default_rng(2)
        fmap, mask, pruned = pruned_fixture(rng, 2, 2, 3, 0.0)
        out = recover_direct_copy(pruned, mask, fmap)
        assert np.array_equal(out.values, fmap.values)

    def test_pruned_rows_come_from_cache(self):
        cached = FeatureMap(1, 2, np.asarray([[5.0], [7.0]]))
        mask = PruneMask(2, np.asarray([0]), 0.5)
        pruned = FeatureMap(1, 2, np.asarray([[1.0]]), index_map=[0])
        out = recover_direct_copy(pruned, mask, cached)
        assert out.values.tolist() == [[1.0], [7.0]]

    def test_pruned_positions_bitwise_equal_cache(self):
        rng = np.random.default_rng(3)
        fmap, mask, pruned = pruned_fixture(rng, 4, 4, 5, 0.7)
        cached = FeatureMap(4, 4, rng.standard_normal((16, 5)))
        out = recover_direct_copy(pruned, mask, cached)
        assert np.array_equal(out.values[mask.pruned], cached.values[mask.pruned])

    def test_shape_mismatch(self):
        rng = np.random.default_rng(4)
        _, mask, pruned = pruned_fixture(rng, 4, 4, 5, 0.7)
        with pytest.raises(DimensionMismatchError):
            recover_direct_copy(pruned, mask, FeatureMap(4, 4, np.zeros((16, 4))))


class TestSimilarityCopy:
    def test_nothing_pruned_is_identity(self):
        rng = np.random.default_rng(5)
        fmap, mask, pruned = pruned_fixture(rng, 2, 2, 3, 0.0)
        attn = validate_attention(random_stochastic(rng, 4))
        out = recover_similarity_copy(pruned, mask, attn)
        assert np.array_equal(out.values, fmap.values)

    def test_highest_received_attention_wins(self):
        # retained values 10e, 20e, 30e at positions 0..2; column 3 over the
        # retained rows is [0.1, 0.5, 0.2], so position 3 copies 20e
        values = np.asarray([[10.0, 10.0], [20.0, 20.0], [30.0, 30.0]])
        mask = PruneMask(4, np.asarray([0, 1, 2]), 0.25)
        pruned = FeatureMap(2, 2, values, index_map=[0, 1, 2])
        attn = validate_attention(
            np.asarray(
                [
                    [0.3, 0.3, 0.3, 0.1],
                    [0.2, 0.2, 0.1, 0.5],
                    [0.3, 0.3, 0.2, 0.2],
                    [0.25, 0.25, 0.25, 0.25],
                ]
            )
        )
        out = recover_similarity_copy(pruned, mask, attn)
        assert out.values[3].tolist() == [20.0, 20.0]

    def test_ties_break_to_lower_retained_index(self):
        values = np.asarray([[1.0], [2.0]])
        mask = PruneMask(3, np.asarray([0, 1]), 1 / 3)
        pruned = FeatureMap(1, 3, values, index_map=[0, 1])
        attn = validate_attention(
            np.asarray([[0.4, 0.2, 0.4], [0.3, 0.3, 0.4], [0.3, 0.3, 0.4]])
        )
        out = recover_similarity_copy(pruned, mask, attn)
        assert out.values[2].tolist() == [1.0]

    def test_never_selects_pruned_source(self):
        # the globally strongest sender for column 3 is pruned token 2;
        # its row must be ignored in favour of the best retained row
        values = np.asarray([[1.0], [2.0]])
        mask = PruneMask(4, np.asarray([0, 1]), 0.5)
        pruned = FeatureMap(2, 2, values, index_map=[0, 1])
        attn = validate_attention(
            np.asarray(
                [
                    [0.4, 0.2, 0.2, 0.2],
                    [0.5, 0.2, 0.2, 0.1],
                    [0.02, 0.04, 0.04, 0.9],
                    [0.25, 0.25, 0.25, 0.25],
                ]
            )
        )
        out = recover_similarity_copy(pruned, mask, attn)
        assert out.values[3].tolist() == [1.0]
        assert out.values[2].tolist() == [1.0]

    def test_every_recovered_row_is_a_retained_copy(self):
        rng = np.random.default_rng(6)
        fmap, mask, pruned = pruned_fixture(rng, 4, 4, 3, 0.6)
        attn = validate_attention(random_stochastic(rng, 16))
        out = recover_similarity_copy(pruned, mask, attn)
        retained_rows = {tuple(r) for r in pruned.values}
        for b in mask.pruned:
            assert tuple(out.values[b]) in retained_rows

    def test_duplicate_construction_recovers_exactly(self):
        # every pruned token has a value-identical twin among the retained
        # tokens, and that twin sends it the dominant attention
        rng = np.random.default_rng(7)
        n, channels = 16, 3
        retained = np.asarray([1, 4, 6, 9, 12, 15])
        mask = PruneMask(n, retained, 1 - len(retained) / n)
        missing = mask.pruned
        twins = retained[np.arange(missing.size) % retained.size]
        values = rng.standard_normal((n, channels))
        values[missing] = values[twins]
        weights = rng.uniform(0.1, 1.0, (n, n))
        weights[twins, missing] = 40.0
        attn = validate_attention(weights / weights.sum(axis=1, keepdims=True))
        fmap = FeatureMap(4, 4, values)
        out = recover_similarity_copy(apply_mask(fmap, mask), mask, attn)
        assert np.array_equal(out.values, fmap.values)  # L2 error is exactly 0
        zeros = recover_zero_pad(apply_mask(fmap, mask), mask)
        assert np.linalg.norm(zeros.values - fmap.values) > 0

    def test_dimension_checks(self):
        rng = np.random.default_rng(8)
        _, mask, pruned = pruned_fixture(rng, 4, 4, 3, 0.5)
        with pytest.raises(DimensionMismatchError):
            recover_similarity_copy(
                pruned, mask, validate_attention(random_stochastic(rng, 9))
            )
        with pytest.raises(DimensionMismatchError):
            recover_similarity_copy(
                pruned, mask, validate_attention(random_stochastic(rng, 16, 8))
            )


class TestBicubic:
    def test_nothing_pruned_is_identity(self):
        rng = np.random.default_rng(9)
        fmap, mask, pruned = pruned_fixture(rng, 4, 4, 2, 0.0)
        out = recover_bicubic(pruned, mask)
        assert np.array_equal(out.values, fmap.values)

    def test_zero_support_gives_exact_zero(self):
        # retain only the top-left corner of a 16x16 grid; positions far from
        # it have all-pruned interpolation support and come back exactly 0
        n = 256
        retained = np.asarray([0, 1, 16, 17])
        mask = PruneMask(n, retained, 1 - 4 / n)
        values = np.ones((4, 3))
        pruned = FeatureMap(16, 16, values, index_map=retained)
        out = recover_bicubic(pruned, mask)
        far = [15 * 16 + 15, 8 * 16 + 10, 200]
        for pos in far:
            assert np.array_equal(out.values[pos], np.zeros(3))

    def test_checkerboard_constant_matches_reference(self):
        c = 3.25
        grid = 8
        coords = np.arange(grid * grid)
        retained = coords[(coords // grid + coords % grid) % 2 == 0]
        mask = PruneMask(grid * grid, retained, 1 - len(retained) / (grid * grid))
        values = np.full((len(retained), 2), c)
        pruned = FeatureMap(grid, grid, values, index_map=retained)
        out = recover_bicubic(pruned, mask)
        zero_filled = np.zeros((grid * grid, 2))
        zero_filled[retained] = c
        oracle = reference_bicubic(zero_filled.reshape(grid, grid, 2))
        oracle = oracle.reshape(grid * grid, 2)
        missing = mask.pruned
        np.testing.assert_allclose(out.values[missing], oracle[missing], atol=1e-5)
        # every 2x2 cell averages two retained c's and two zeros
        np.testing.assert_allclose(out.values[missing], c / 2, atol=1e-9)

    @pytest.mark.parametrize("shape,ratio", [((4, 4), 0.5), ((6, 8), 0.7), ((8, 8), 0.3)])
    def test_random_fixtures_match_reference(self, shape, ratio):
        rng = np.random.default_rng(10)
        h, w = shape
        fmap, mask, pruned = pruned_fixture(rng, h, w, 3, ratio)
        out = recover_bicubic(pruned, mask)
        zero_filled = np.zeros((h * w, 3))
        zero_filled[mask.retained] = pruned.values
        oracle = reference_bicubic(zero_filled.reshape(h, w, 3)).reshape(h * w, 3)
        missing = mask.pruned
        np.testing.assert_allclose(out.values[missing], oracle[missing], atol=1e-5)
        assert np.array_equal(out.values[mask.retained], pruned.values)

    def test_dimension_errors(self):
        rng = np.random.default_rng(11)
        _, mask, pruned = pruned_fixture(rng, 3, 4, 2, 0.5)
        with pytest.raises(OddDimensionsError):
            recover_bicubic(pruned, mask)
        _, mask, pruned = pruned_fixture(rng, 2, 2, 2, 0.5)
        with pytest.raises(GridTooSmallError):
            recover_bicubic(pruned, mask)


class TestSharedContracts:
    def test_retained_rows_pass_through_all_methods(self):
        rng = np.random.default_rng(12)
        fmap, mask, pruned = pruned_fixture(rng, 4, 4, 3, 0.6)
        attn = validate_attention(random_stochastic(rng, 16))
        cached = FeatureMap(4, 4, rng.standard_normal((16, 3)))
        outputs = [
            recover_zero_pad(pruned, mask),
            recover_direct_copy(pruned, mask, cached),
            recover_similarity_copy(pruned, mask, attn),
            recover_bicubic(pruned, mask),
        ]
        for out in outputs:
            assert out.is_complete
            assert out.values.shape[0] == 16
            assert np.array_equal(out.values[mask.retained], pruned.values)

    def test_mismatched_mask_rejected(self):
        rng = np.random.default_rng(13)
        _, mask, pruned = pruned_fixture(rng, 4, 4, 3, 0.6)
        other = PruneMask(16, np.arange(1, len(mask.retained) + 1), mask.ratio)
        with pytest.raises(DimensionMismatchError):
            recover_zero_pad(pruned, other)
