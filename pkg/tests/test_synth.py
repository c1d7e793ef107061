import numpy as np
import pytest

from attnprune.errors import ValidationError
from attnprune.maps import average_heads, map_variance
from attnprune.synth import substream, synth_attention, synth_features


class TestSynthAttention:
    def test_zero_concentration_is_exactly_uniform(self):
        stack = synth_attention(8, 3, 0.0, 42)
        for head in stack.heads:
            assert np.array_equal(head.entries, np.full((8, 8), 1 / 8))
        assert map_variance(average_heads(stack)) == 0.0

    def test_rows_are_stochastic(self):
        stack = synth_attention(32, 4, 5.0, 7)
        for head in stack.heads:
            assert (head.entries >= 0).all()
            np.testing.assert_allclose(head.entries.sum(axis=1), 1.0, atol=1e-12)

    def test_same_seed_bitwise_identical(self):
        a = synth_attention(16, 2, 3.0, 123)
        b = synth_attention(16, 2, 3.0, 123)
        for ha, hb in zip(a.heads, b.heads):
            assert np.array_equal(ha.entries, hb.entries)
        c = synth_attention(16, 2, 3.0, 124)
        assert not np.array_equal(a.heads[0].entries, c.heads[0].entries)

    def test_concentration_orders_variance(self):
        # peakier logits -> higher map variance, for every seed
        for seed in range(100):
            sharp = map_variance(average_heads(synth_attention(64, 1, 10.0, seed)))
            flat = map_variance(average_heads(synth_attention(64, 1, 0.1, seed)))
            assert sharp > flat

    def test_parameter_validation(self):
        with pytest.raises(ValidationError):
            synth_attention(0, 1, 1.0, 0)
        with pytest.raises(ValidationError):
            synth_attention(4, 0, 1.0, 0)
        with pytest.raises(ValidationError):
            synth_attention(4, 1, -1.0, 0)


class TestSynthFeatures:
    def test_shape_and_determinism(self):
        a = synth_features(4, 6, 8, 5)
        assert a.is_complete and a.values.shape == (24, 8)
        b = synth_features(4, 6, 8, 5)
        assert np.array_equal(a.values, b.values)


class TestSubstream:
    def test_paths_are_independent_and_reproducible(self):
        a = synth_features(2, 2, 4, substream(9, 3, 1))
        b = synth_features(2, 2, 4, substream(9, 3, 1))
        c = synth_features(2, 2, 4, substream(9, 3, 2))
        assert np.array_equal(a.values, b.values)
        assert not np.array_equal(a.values, c.values)
