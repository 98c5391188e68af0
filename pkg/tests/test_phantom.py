"""
Tests for synthetic fundus phantoms.
"""

import json
import os

import numpy as np
import pytest
from pydantic import ValidationError
from skimage import measure

from retinakit.evalharness import load_manifest
from retinakit.exceptions import ArgumentError
from retinakit.imgio import ColorSpace, load_image, load_mask
from retinakit.testing.phantom import FLARE_RGB, PhantomSpec, generate_phantom, write_phantom_set


class TestGeneratePhantom:
    """Tests for rendering a single phantom."""

    def test_shapes_and_types(self, small_phantom, small_spec):
        """Test image and mask geometry."""
        assert small_phantom.image.shape == (small_spec.height, small_spec.width)
        assert small_phantom.image.space == ColorSpace.RGB
        assert small_phantom.exudate.shape == small_phantom.image.shape
        assert small_phantom.lesions == 3
        assert 0.0 <= small_phantom.image.data.min() <= small_phantom.image.data.max() <= 1.0

    def test_deterministic(self, small_spec):
        """Test that a seed reproduces the phantom exactly."""
        a = generate_phantom(small_spec)
        b = generate_phantom(small_spec)
        c = generate_phantom(small_spec.model_copy(update={"seed": 4}))
        assert np.array_equal(a.image.data, b.image.data)
        assert np.array_equal(a.exudate.bits, b.exudate.bits)
        assert not np.array_equal(a.exudate.bits, c.exudate.bits)

    def test_masks_are_consistent(self, small_phantom):
        """Test that hard and soft truth are disjoint and form the exudate mask."""
        hard, soft = small_phantom.hard.bits, small_phantom.soft.bits
        assert not (hard & soft).any()
        assert np.array_equal(small_phantom.exudate.bits, hard | soft)

    def test_lesion_counts(self, small_spec):
        """Test one component per painted lesion."""
        phantom = generate_phantom(small_spec.model_copy(update={"noise": 0.0}))
        assert measure.label(phantom.hard.bits, connectivity=2).max() == small_spec.hard_lesions
        assert measure.label(phantom.soft.bits, connectivity=2).max() == small_spec.soft_lesions

    def test_flares_are_not_truth(self, small_spec):
        """Test that flare pixels exist but lie outside the exudate mask."""
        phantom = generate_phantom(small_spec.model_copy(update={"noise": 0.0}))
        flare = np.all(np.isclose(phantom.image.data, FLARE_RGB), axis=2)
        assert flare.sum() > 100
        assert np.array_equal(flare, phantom.flares.bits)
        assert not (flare & phantom.exudate.bits).any()

    def test_exudates_are_bright(self, small_phantom):
        """Test that truth pixels are brighter in green than the background."""
        green = small_phantom.image.data[:, :, 1]
        assert green[small_phantom.hard.bits].mean() > green.mean() + 0.3

    def test_landmarks(self, small_phantom, small_spec):
        """Test that both landmarks lie inside the image."""
        lm = small_phantom.landmarks
        assert lm.inside()
        assert (lm.image_width, lm.image_height) == (small_spec.width, small_spec.height)

    def test_no_lesions(self):
        """Test a phantom with only background and vessels."""
        phantom = generate_phantom(
            PhantomSpec(width=96, height=96, hard_lesions=0, soft_lesions=0, flares=0)
        )
        assert phantom.exudate.count() == 0
        assert phantom.lesions == 0

    def test_placement_failure(self):
        """Test that an overcrowded spec is rejected."""
        spec = PhantomSpec(width=64, height=64, vessels=0, hard_lesions=40, spacing=20, margin=10)
        with pytest.raises(ArgumentError):
            generate_phantom(spec)

    def test_spec_validation(self):
        """Test that unknown and out-of-range fields are rejected."""
        with pytest.raises(ValidationError):
            PhantomSpec(width=10)
        with pytest.raises(ValidationError):
            PhantomSpec(lesions=3)


class TestWritePhantomSet:
    """Tests for writing phantom datasets."""

    def test_files_and_manifest(self, tmp_path, small_spec):
        """Test that images, masks and a loadable manifest are written."""
        out_dir = str(tmp_path / "phantoms")
        manifest = write_phantom_set(out_dir, 2, small_spec)

        assert manifest == os.path.join(out_dir, "manifest.json")
        expected = {
            f"phantom_{i:03d}{suffix}.png"
            for i in range(2)
            for suffix in ("", "_exudate", "_hard", "_soft")
        }
        assert expected <= set(os.listdir(out_dir))
        with open(manifest) as f:
            assert len(json.load(f)) == 2

        entries = load_manifest(manifest)
        assert all(entry.has_landmarks for entry in entries)
        assert entries[0].hard_mask.endswith("phantom_000_hard.png")

    def test_seeds_advance(self, tmp_path, small_spec):
        """Test that files round-trip and each phantom uses the next seed."""
        out_dir = str(tmp_path / "phantoms")
        entries = load_manifest(write_phantom_set(out_dir, 2, small_spec))

        second = generate_phantom(small_spec.model_copy(update={"seed": small_spec.seed + 1}))
        assert np.array_equal(load_mask(entries[1].exudate_mask).bits, second.exudate.bits)
        img = load_image(entries[1].image)
        assert np.abs(img.data - second.image.data).max() <= 0.5 / 255.0 + 1e-9
