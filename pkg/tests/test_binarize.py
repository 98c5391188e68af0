"""
Tests for summed-area tables and Sauvola binarisation.
"""

import numpy as np
import pytest
from pydantic import ValidationError

from retinakit.binarize import (
    binarize,
    integral_stats,
    sauvola_threshold,
    significance_floor,
    window_stats,
    window_sum,
)
from retinakit.config import BinarizeParams, SauvolaParams
from retinakit.exceptions import ArgumentError


def brute_force_stats(m, window):
    r = window // 2
    padded = np.pad(m, r, mode="edge")
    mean = np.empty_like(m)
    std = np.empty_like(m)
    for y in range(m.shape[0]):
        for x in range(m.shape[1]):
            patch = padded[y : y + window, x : x + window]
            mean[y, x] = patch.mean()
            std[y, x] = patch.std()
    return mean, std


def brute_force_sauvola(m, window, c):
    mean, std = brute_force_stats(m, window)
    threshold = mean * (1.0 + c * (std / std.max() - 1.0))
    return m > threshold


class TestIntegralImage:
    """Tests for the summed-area tables."""

    def test_window_sum_matches_direct_sum(self, rng):
        """Test inclusion-exclusion lookups against slicing."""
        m = rng.random((13, 17))
        s, sq, shift = integral_stats(m)
        assert s.shape == (14, 18)
        for y0, x0, y1, x1 in [(0, 0, 13, 17), (2, 3, 9, 11), (5, 5, 6, 6), (0, 4, 1, 17)]:
            block = m[y0:y1, x0:x1] - shift
            assert window_sum(s, y0, x0, y1, x1) == pytest.approx(block.sum(), abs=1e-10)
            assert window_sum(sq, y0, x0, y1, x1) == pytest.approx((block**2).sum(), abs=1e-10)

    def test_window_stats_match_brute_force(self, rng):
        """Test replicated-border window statistics."""
        m = rng.random((12, 15))
        mean, std = window_stats(m, 5)
        expected_mean, expected_std = brute_force_stats(m, 5)
        assert np.allclose(mean, expected_mean)
        assert np.allclose(std, expected_std, atol=1e-7)

    def test_flat_map_has_zero_deviation(self):
        """Test that rounding never yields a negative variance."""
        _, std = window_stats(np.full((10, 10), 0.3), 3)
        assert np.all(std == 0.0)


class TestSauvola:
    """Tests for the local threshold."""

    @pytest.mark.parametrize("window,c", [(3, 0.2), (5, 0.35), (9, 0.5)])
    def test_matches_brute_force(self, rng, window, c):
        """Test the integral-image path against a direct computation."""
        m = rng.random((20, 23))
        out = sauvola_threshold(m, SauvolaParams(window=window, c=c))
        assert np.array_equal(out.bits, brute_force_sauvola(m, window, c))

    def test_brute_force_grid(self, rng):
        """Test 25 random maps for every window and sensitivity pairing."""
        for _ in range(25):
            m = rng.random((32, 32))
            for window in (5, 9):
                mean, std = brute_force_stats(m, window)
                for c in (0.2, 0.35, 0.5):
                    expected = m > mean * (1.0 + c * (std / std.max() - 1.0))
                    out = sauvola_threshold(m, SauvolaParams(window=window, c=c))
                    assert np.array_equal(out.bits, expected)

    def test_flat_map_is_empty(self):
        """Test that a map without variation selects nothing."""
        out = sauvola_threshold(np.full((12, 12), 0.5), SauvolaParams())
        assert out.count() == 0

    def test_window_larger_than_image(self):
        """Test that an oversized window is rejected."""
        with pytest.raises(ArgumentError):
            sauvola_threshold(np.zeros((5, 40)), SauvolaParams(window=9))

    def test_higher_c_selects_more(self, rng):
        """Test that the selection grows with the sensitivity."""
        m = rng.random((30, 30))
        low = sauvola_threshold(m, SauvolaParams(c=0.2))
        high = sauvola_threshold(m, SauvolaParams(c=0.5))
        assert np.all(high.bits[low.bits])
        assert high.count() >= low.count()

    @pytest.mark.parametrize("fields", [{"window": 8}, {"c": 0.1}, {"c": 0.6}, {"window": 1}])
    def test_parameter_validation(self, fields):
        """Test window parity and the c range."""
        with pytest.raises(ValidationError):
            SauvolaParams(**fields)


class TestBinarize:
    """Tests for the combined detector binarisation."""

    def test_floor_removes_weak_bumps(self):
        """Test that locally salient but weak responses are dropped."""
        m = np.zeros((30, 30))
        m[8:11, 8:11] = 0.01
        m[18:21, 18:21] = 0.5
        local = sauvola_threshold(m, SauvolaParams())
        out = binarize(m, BinarizeParams())

        assert local.bits[9, 9]
        assert not out.bits[9, 9]
        assert out.bits[19, 19]

    def test_is_intersection(self, rng):
        """Test that the result is Sauvola AND floor."""
        m = rng.random((16, 16)) * 0.2
        p = BinarizeParams(min_response=0.1)
        expected = sauvola_threshold(m, p.sauvola()).bits & significance_floor(m, 0.1).bits
        assert np.array_equal(binarize(m, p).bits, expected)
