import numpy as np
import pytest

from attnprune.errors import (
    DimensionMismatchError,
    EmptyStackError,
    NegativeEntryError,
    NonFiniteEntryError,
    RowSumError,
)
from attnprune.maps import (
    AttentionMap,
    FeatureMap,
    HeadStack,
    average_heads,
    map_variance,
    stack_heads,
    validate_attention,
)


def random_stochastic(rng, m, n=None):
    n = m if n is None else n
    raw = rng.random((m, n)) + 1e-3
    return raw / raw.sum(axis=1, keepdims=True)


class TestValidateAttention:
    def test_identity_accepted_unchanged(self):
        amap = validate_attention(np.eye(2))
        assert np.array_equal(amap.entries, np.eye(2))

    def test_row_sum_out_of_tolerance(self):
        with pytest.raises(RowSumError) as err:
            validate_attention([[0.5, 0.5], [0.7, 0.2]])
        assert err.value.row == 1
        assert err.value.total == pytest.approx(0.9)

    def test_renormalizes_inside_tolerance(self):
        amap = validate_attention([[0.50001, 0.5], [0.3, 0.7]])
        np.testing.assert_allclose(amap.entries.sum(axis=1), 1.0, atol=1e-15)
        # direction preserved, magnitude scaled down
        assert amap.entries[0, 0] > amap.entries[0, 1]

    def test_negative_entry(self):
        with pytest.raises(NegativeEntryError) as err:
            validate_attention([[1.1, -0.1], [0.5, 0.5]])
        assert err.value.position == (0, 1)

    def test_non_finite(self):
        with pytest.raises(NonFiniteEntryError):
            validate_attention([[np.nan, 1.0], [0.5, 0.5]])
        with pytest.raises(NonFiniteEntryError):
            validate_attention([[np.inf, 0.0], [0.5, 0.5]])

    def test_idempotent(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            raw = random_stochastic(rng, 9)
            raw[0] *= 1 + 4e-6  # inside tolerance, outside the skip band
            once = validate_attention(raw)
            twice = validate_attention(once.entries)
            assert np.array_equal(once.entries, twice.entries)


class TestAverageHeads:
    def test_single_head_unchanged(self):
        head = validate_attention(np.eye(3))
        avg = average_heads(HeadStack((head,)))
        assert np.array_equal(avg.entries, head.entries)

    def test_two_head_symmetry(self):
        avg = average_heads(stack_heads([np.eye(2), np.eye(2)[::-1]]))
        assert np.array_equal(avg.entries, np.full((2, 2), 0.5))

    def test_matches_elementwise_mean_oracle(self):
        rng = np.random.default_rng(1)
        heads = [random_stochastic(rng, 16) for _ in range(8)]
        avg = average_heads(stack_heads(heads))
        oracle = sum(heads) / len(heads)  # independent elementwise mean
        np.testing.assert_allclose(avg.entries, oracle, atol=1e-12)
        np.testing.assert_allclose(avg.entries.sum(axis=1), 1.0, atol=1e-5)

    def test_commutes_with_head_permutation_exactly(self):
        rng = np.random.default_rng(2)
        heads = [random_stochastic(rng, 12) for _ in range(5)]
        forward = average_heads(stack_heads(heads))
        for perm in ([4, 2, 0, 1, 3], [1, 0, 3, 2, 4]):
            shuffled = average_heads(stack_heads([heads[i] for i in perm]))
            assert np.array_equal(forward.entries, shuffled.entries)

    def test_empty_stack(self):
        with pytest.raises(EmptyStackError):
            HeadStack(())

    def test_mismatched_heads(self):
        with pytest.raises(DimensionMismatchError):
            stack_heads([np.eye(2), np.eye(3)])


class TestMapVariance:
    def test_uniform_is_zero(self):
        amap = validate_attention(np.full((4, 4), 0.25))
        assert map_variance(amap) == 0.0

    @pytest.mark.parametrize("n", [2, 3, 5, 8])
    def test_one_hot_rows_closed_form(self, n):
        rng = np.random.default_rng(n)
        entries = np.zeros((n, n))
        entries[np.arange(n), rng.integers(0, n, n)] = 1.0
        got = map_variance(validate_attention(entries))
        # brute force over entries, then the closed form
        flat = entries.ravel()
        brute = sum((x - flat.mean()) ** 2 for x in flat) / flat.size
        assert got == pytest.approx(brute, abs=1e-15)
        assert got == pytest.approx(1 / n - 1 / n**2, abs=1e-12)

    def test_matches_two_pass_oracle(self):
        rng = np.random.default_rng(3)
        entries = random_stochastic(rng, 32)
        amap = validate_attention(entries)
        mean = amap.entries.sum() / amap.entries.size
        two_pass = ((amap.entries - mean) ** 2).sum() / amap.entries.size
        assert map_variance(amap) == pytest.approx(two_pass, abs=1e-10)

    def test_permutation_invariant(self):
        rng = np.random.default_rng(4)
        amap = validate_attention(random_stochastic(rng, 10))
        rows = rng.permutation(10)
        cols = rng.permutation(10)
        permuted = AttentionMap(amap.entries[rows][:, cols])
        assert map_variance(permuted) == pytest.approx(
            map_variance(amap), rel=1e-12, abs=1e-18
        )

    def test_bounded_by_one_hot_maximum(self):
        rng = np.random.default_rng(5)
        for n in range(2, 9):
            for _ in range(25):
                amap = validate_attention(random_stochastic(rng, n))
                v = map_variance(amap)
                assert 0.0 <= v <= 1 / n - 1 / n**2 + 1e-15


class TestFeatureMap:
    def test_complete_row_count_enforced(self):
        with pytest.raises(DimensionMismatchError):
            FeatureMap(2, 2, np.zeros((3, 5)))

    def test_pruned_index_map_rules(self):
        values = np.arange(6.0).reshape(3, 2)
        fmap = FeatureMap(2, 2, values, index_map=[0, 2, 3])
        assert not fmap.is_complete
        assert fmap.channels == 2
        with pytest.raises(DimensionMismatchError):
            FeatureMap(2, 2, values, index_map=[0, 0, 3])  # not increasing
        with pytest.raises(DimensionMismatchError):
            FeatureMap(2, 2, values, index_map=[0, 2, 4])  # out of range
        with pytest.raises(DimensionMismatchError):
            FeatureMap(2, 2, values, index_map=[0, 2])  # wrong length
