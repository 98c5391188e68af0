"""
Tests for structuring elements and morphological operators.
"""

import numpy as np
import pytest

from retinakit.exceptions import ArgumentError
from retinakit.imgio import BinaryMask
from retinakit.morphology import (
    Disk,
    Rect,
    Square,
    closing,
    dilate,
    enhance_interest_map,
    erode,
    fill_holes,
    opening,
    white_tophat,
)


class TestStructuringElement:
    """Tests for element construction."""

    def test_disk_offsets(self):
        """Test disk membership by squared distance."""
        assert Disk(0).offsets() == {(0, 0)}
        assert Disk(1).offsets() == {(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)}
        assert len(Disk(2).offsets()) == 13
        assert len(Disk(3).offsets()) == 29

    def test_square_and_rect(self):
        """Test rectangular footprints."""
        assert len(Square(3).offsets()) == 9
        rect = Rect(3, 5)
        assert rect.footprint.shape == (5, 3)
        assert (0, 2) in rect.offsets()
        assert (2, 0) not in rect.offsets()

    @pytest.mark.parametrize("factory,args", [(Square, (4,)), (Rect, (3, 2)), (Disk, (-1,))])
    def test_invalid_sizes(self, factory, args):
        """Test that even sides and negative radii are rejected."""
        with pytest.raises(ArgumentError):
            factory(*args)


class TestBinaryMorphology:
    """Tests for operators on masks."""

    def test_dilate_point_to_cross(self):
        """Test that dilation stamps the element."""
        bits = np.zeros((5, 5), dtype=bool)
        bits[2, 2] = True
        out = dilate(BinaryMask(bits), Disk(1))
        assert isinstance(out, BinaryMask)
        assert out.count() == 5
        assert out.bits[1, 2] and out.bits[2, 1] and not out.bits[1, 1]

    def test_border_does_not_leak(self):
        """Test that outside pixels neither add nor remove foreground."""
        full = BinaryMask(np.ones((6, 6), dtype=bool))
        assert erode(full, Square(3)).count() == 36
        corner = np.zeros((6, 6), dtype=bool)
        corner[0, 0] = True
        assert dilate(BinaryMask(corner), Square(3)).count() == 4

    def test_opening_removes_thin_lines(self, box_mask):
        """Test that structures thinner than the element vanish."""
        mask = box_mask((30, 30), (5, 2, 6, 28), (15, 10, 22, 17))
        out = opening(mask, Square(5))
        assert out.count() == 49
        assert not out.bits[5].any()

    def test_opening_is_idempotent(self, rng):
        """Test that a second opening changes nothing."""
        mask = BinaryMask(rng.random((25, 25)) > 0.4)
        once = opening(mask, Disk(1))
        assert np.array_equal(opening(once, Disk(1)).bits, once.bits)

    def test_closing_bridges_gap(self, box_mask):
        """Test that a one-pixel gap is closed."""
        mask = box_mask((9, 12), (3, 1, 6, 5), (3, 6, 6, 11))
        out = closing(mask, Square(3))
        assert out.bits[4, 5]

    def test_fill_holes(self, box_mask):
        """Test that enclosed background is filled."""
        ring = box_mask((9, 9), (1, 1, 8, 8)).bits.copy()
        ring[3:6, 3:6] = False
        assert fill_holes(BinaryMask(ring)).count() == 49


class TestGrayMorphology:
    """Tests for operators on float maps."""

    def test_dilate_at_border(self):
        """Test that the max filter ignores outside pixels."""
        m = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0], [7.0, 8.0, 9.0]])
        out = dilate(m, Square(3))
        assert out[0, 0] == 5.0
        assert out[2, 2] == 9.0
        assert erode(m, Square(3))[2, 2] == 5.0

    def test_tophat_isolates_peak(self):
        """Test that a narrow peak survives the top-hat at its height."""
        m = np.full((15, 15), 0.2)
        m[7, 7] = 0.7
        out = white_tophat(m, Square(3))
        assert out[7, 7] == pytest.approx(0.5)
        assert np.count_nonzero(out > 1e-12) == 1

    def test_enhance_fills_dips(self):
        """Test that closings lift a narrow dip and never lower the map."""
        m = np.ones((11, 11))
        m[5, 5] = 0.0
        out = enhance_interest_map(m)
        assert out[5, 5] == 1.0
        assert np.all(out >= m)

    def test_enhance_custom_radii(self, rng):
        """Test the pointwise maximum with explicit radii."""
        m = rng.random((16, 16))
        expected = np.maximum(m, closing(m, Disk(1)))
        assert np.array_equal(enhance_interest_map(m, (1,)), expected)

    def test_gray_needs_2d(self):
        """Test that stacked arrays are rejected."""
        with pytest.raises(ArgumentError):
            dilate(np.zeros((3, 3, 3)), Disk(1))


def _brute_force(m, se, reduce):
    """Reference filter over in-image offsets only."""
    h, w = m.shape
    out = np.empty_like(m)
    for y in range(h):
        for x in range(w):
            vals = [
                m[y + dy, x + dx]
                for dx, dy in se.offsets()
                if 0 <= y + dy < h and 0 <= x + dx < w
            ]
            out[y, x] = reduce(vals)
    return out


ELEMENTS = [Disk(1), Disk(2), Square(3), Rect(3, 5)]


class TestMorphologyLaws:
    """Algebraic properties shared by the grayscale and binary operators."""

    @pytest.mark.parametrize("se", ELEMENTS, ids=["disk1", "disk2", "square3", "rect3x5"])
    def test_matches_brute_force(self, rng, se):
        """Test dilation and erosion against a direct max/min over the element."""
        m = rng.random((8, 8))
        assert np.array_equal(dilate(m, se), _brute_force(m, se, max))
        assert np.array_equal(erode(m, se), _brute_force(m, se, min))
        bits = m > 0.5
        assert np.array_equal(dilate(BinaryMask(bits), se).bits, _brute_force(bits, se, any))
        assert np.array_equal(erode(BinaryMask(bits), se).bits, _brute_force(bits, se, all))

    @pytest.mark.parametrize("op", [dilate, erode, opening, closing])
    def test_gray_and_binary_agree(self, rng, op):
        """Test that a 0/1 map and its mask give the same result."""
        for _ in range(5):
            bits = rng.random((20, 24)) > 0.55
            gray = op(bits.astype(np.float64), Disk(2))
            assert np.array_equal(gray > 0.5, op(BinaryMask(bits), Disk(2)).bits)

    def test_ordering_chain(self, rng):
        """Test erode <= opening <= map <= closing <= dilate pointwise."""
        for se in ELEMENTS:
            m = rng.random((30, 30))
            chain = [erode(m, se), opening(m, se), m, closing(m, se), dilate(m, se)]
            for lower, upper in zip(chain, chain[1:]):
                assert np.all(lower <= upper)

    @pytest.mark.parametrize("op", [dilate, erode, opening, closing])
    def test_monotone(self, rng, op):
        """Test that a pointwise larger map never gives a smaller result."""
        m = rng.random((25, 25))
        bigger = m + rng.random((25, 25)) * 0.3
        assert np.all(op(m, Disk(2)) <= op(bigger, Disk(2)))

    def test_closing_is_idempotent(self, rng):
        """Test that a second closing changes nothing, on maps and masks."""
        for se in ELEMENTS:
            m = rng.random((20, 20))
            once = closing(m, se)
            assert np.array_equal(closing(once, se), once)
            mask = BinaryMask(m > 0.6)
            once_mask = closing(mask, se)
            assert np.array_equal(closing(once_mask, se).bits, once_mask.bits)

    def test_opening_idempotent_on_many_masks(self, rng):
        """Test opening idempotence over twenty random masks."""
        for _ in range(20):
            mask = BinaryMask(rng.random((24, 24)) > rng.uniform(0.2, 0.7))
            for se in ELEMENTS:
                once = opening(mask, se)
                assert np.array_equal(opening(once, se).bits, once.bits)
