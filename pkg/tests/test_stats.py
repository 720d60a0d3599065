import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fgtseg.errors import DegenerateInput, LengthMismatch, TooFewValues
from fgtseg.stats import bootstrap_ci, mean_std, pearson, permutation_test

samples = st.lists(st.floats(-100, 100), min_size=3, max_size=20)


class TestPearson:
    def test_identity(self):
        x = [1.0, 2.0, 5.0, 7.0]
        assert pearson(x, x) == pytest.approx(1.0, abs=1e-12)

    def test_affine_anti(self):
        x = np.arange(6.0)
        assert pearson(x, -2 * x + 3) == pytest.approx(-1.0, abs=1e-12)

    def test_hand_example(self):
        # dx = dy = (-1.5, -.5, .5, 1.5) permuted: sum dx*dy = 3, sxx = syy = 5
        assert abs(pearson([1, 2, 3, 4], [2, 1, 4, 3]) - 0.6) <= 1e-12

    def test_degenerate(self):
        with pytest.raises(DegenerateInput):
            pearson([1, 1, 1], [1, 2, 3])
        with pytest.raises(DegenerateInput):
            pearson([1], [2])

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            pearson([1, 2], [1, 2, 3])

    @settings(max_examples=60, deadline=None)
    @given(st.data())
    def test_positive_affine_invariance(self, data):
        x = np.array(data.draw(samples))
        y = np.array(data.draw(st.lists(st.floats(-100, 100), min_size=len(x), max_size=len(x))))
        if np.ptp(x) < 1e-3 or np.ptp(y) < 1e-3:
            return
        a = data.draw(st.floats(0.1, 10))
        b = data.draw(st.floats(-10, 10))
        assert pearson(a * x + b, y) == pytest.approx(pearson(x, y), abs=1e-9)


class TestBootstrap:
    def test_constant(self):
        assert bootstrap_ci([0.7] * 12, n_resamples=500) == (0.7, 0.7)

    def test_deterministic(self):
        v = np.random.default_rng(0).normal(size=30)
        assert bootstrap_ci(v, seed=3) == bootstrap_ci(v, seed=3)

    @pytest.mark.parametrize("sample_seed", range(10))
    def test_normal_width(self, sample_seed):
        v = np.random.default_rng(sample_seed).standard_normal(100)
        lo, hi = bootstrap_ci(v, n_resamples=10000, seed=0)
        analytic = 2 * 1.96 / np.sqrt(100)
        assert abs((hi - lo) - analytic) <= 0.2 * analytic
        # against the plug-in normal interval the match is much tighter
        assert (hi - lo) == pytest.approx(2 * 1.96 * v.std() / 10, rel=0.03)

    def test_too_few(self):
        with pytest.raises(TooFewValues):
            bootstrap_ci([1.0])

    @settings(max_examples=30, deadline=None)
    @given(samples)
    def test_ordered(self, v):
        lo, hi = bootstrap_ci(v, n_resamples=200)
        assert lo <= hi
        assert min(v) - 1e-9 <= lo and hi <= max(v) + 1e-9


class TestPermutation:
    def test_identical(self):
        a = np.random.default_rng(0).normal(size=10)
        assert permutation_test(a, a) == 1.0

    def test_shifted(self):
        rng = np.random.default_rng(0)
        b = rng.normal(size=50)
        a = b + 10 + rng.normal(scale=0.01, size=50)
        assert permutation_test(a, b, seed=0) < 0.01

    def test_deterministic(self):
        rng = np.random.default_rng(1)
        a, b = rng.normal(size=15), rng.normal(size=15)
        assert permutation_test(a, b, seed=5) == permutation_test(a, b, seed=5)

    def test_errors(self):
        with pytest.raises(LengthMismatch):
            permutation_test([1, 2], [1, 2, 3])
        with pytest.raises(TooFewValues):
            permutation_test([1], [2])

    @settings(max_examples=30, deadline=None)
    @given(st.data())
    def test_range(self, data):
        a = data.draw(samples)
        b = data.draw(st.lists(st.floats(-100, 100), min_size=len(a), max_size=len(a)))
        p = permutation_test(a, b, n_permutations=200)
        assert 0 < p <= 1


def test_mean_std_population():
    assert mean_std([1.0, 3.0]) == (2.0, 1.0)
    assert mean_std([5.0]) == (5.0, 0.0)
