"""
Tests for the detection pipeline.
"""

import os
import time

import numpy as np
import pytest

from retinakit.classifier import FEATURE_NAMES, label_regions, train
from retinakit.config import ClassifierParams, PipelineConfig
from retinakit.evalharness import confusion, micro_aggregate, rates
from retinakit.exceptions import ArgumentError, PipelineError
from retinakit.imgio import BinaryMask, ColorSpace, RasterImage, load_interest_map
from retinakit.models.exudate import ExudateClass
from retinakit.models.grades import SeverityLevel
from retinakit.pipeline import ExudatePipeline, StageCache
from retinakit.testing.phantom import PhantomSpec, generate_phantom


@pytest.fixture
def pipeline(quick_config):
    return ExudatePipeline(quick_config)


@pytest.fixture
def detection(pipeline, small_phantom):
    return pipeline.detect(small_phantom.image)


class TestDetect:
    """Tests for running detection."""

    def test_products(self, detection, small_phantom):
        """Test the shapes of every intermediate product."""
        working = detection.working.shape
        assert detection.original_shape == small_phantom.image.shape
        assert detection.dmap.shape == working
        assert detection.enhanced.shape == working
        assert detection.binarized.shape == working
        assert detection.mask.shape == working
        assert detection.full_mask().shape == small_phantom.image.shape
        assert np.all(detection.enhanced >= detection.dmap)

    def test_timings(self, detection):
        """Test that every stage reports its time."""
        stages = ["resize", "diffusion", "gimap", "enhance", "binarize", "opening", "refine"]
        assert set(detection.timings) == set(stages) | {"regions"}

    def test_finds_exudates(self, detection, small_phantom):
        """Test that candidates overlap the painted exudates."""
        counts = confusion(detection.mask, small_phantom.exudate)
        assert counts.tp > 0
        assert rates(counts).pred > 0.5

    def test_resizes_to_working_size(self, quick_config, small_spec):
        """Test that larger inputs are processed at the working size."""
        phantom = generate_phantom(small_spec.model_copy(update={"width": 320, "height": 256}))
        detection = ExudatePipeline(quick_config).detect(phantom.image)
        assert detection.working.shape == (128, 160)
        assert detection.full_mask().shape == (256, 320)

    def test_gray_rejected(self, pipeline):
        """Test that detection needs an RGB raster."""
        with pytest.raises(ArgumentError):
            pipeline.detect(RasterImage(np.zeros((32, 32)), ColorSpace.GRAY))

    def test_stage_failure_names_stage(self, pipeline, small_phantom, monkeypatch):
        """Test that unexpected errors are wrapped with the failing stage."""

        def broken(*args, **kwargs):
            raise RuntimeError("out of memory")

        monkeypatch.setattr("retinakit.pipeline.binarize", broken)
        with pytest.raises(PipelineError) as exc:
            pipeline.detect(small_phantom.image)
        assert exc.value.stage == "binarize"
        assert "out of memory" in str(exc.value)


class TestDecisionMap:
    """Tests for resuming from and caching decision maps."""

    def test_detect_from_map(self, pipeline, detection, small_phantom):
        """Test that a saved map reproduces the detection."""
        resumed = pipeline.detect_from_map(small_phantom.image, detection.dmap)
        assert np.array_equal(resumed.mask.bits, detection.mask.bits)
        assert "diffusion" not in resumed.timings

    def test_detect_from_map_size(self, pipeline, small_phantom):
        """Test that a map of another size is rejected."""
        with pytest.raises(ArgumentError):
            pipeline.detect_from_map(small_phantom.image, np.zeros((10, 10)))

    def test_cache_hit(self, quick_config, small_phantom, tmp_path, monkeypatch):
        """Test that a second run reads the map from the cache."""
        cache = StageCache(str(tmp_path / "cache"))
        pipeline = ExudatePipeline(quick_config, cache=cache)
        first = pipeline.detect(small_phantom.image)
        assert len(os.listdir(tmp_path / "cache")) == 1

        def no_diffusion(*args, **kwargs):
            raise AssertionError("diffusion ran despite a cached map")

        monkeypatch.setattr("retinakit.pipeline.diffuse", no_diffusion)
        second = pipeline.detect(small_phantom.image)
        assert np.array_equal(second.dmap, first.dmap)

    def test_cache_key(self, quick_config, flat_rgb):
        """Test that the key depends on the image and the configuration."""
        img = flat_rgb(16, 16)
        key = StageCache.key(img, quick_config)
        assert key == StageCache.key(flat_rgb(16, 16), quick_config)
        assert key != StageCache.key(flat_rgb(16, 16, (0.5, 0.3, 0.15)), quick_config)
        assert key != StageCache.key(img, PipelineConfig())

    def test_dump(self, detection, tmp_path):
        """Test that intermediates are written."""
        paths = detection.dump(str(tmp_path / "dump"), "img")
        assert set(paths) == {"dmap", "binarized", "working"}
        assert all(os.path.isfile(p) for p in paths.values())
        assert np.array_equal(load_interest_map(paths["dmap"]), detection.dmap)


class TestClassifyAndGrade:
    """Tests for the stages after detection."""

    def test_training_samples(self, pipeline, small_phantom):
        """Test that labelled samples carry full feature vectors."""
        samples = pipeline.training_samples(
            small_phantom.image, small_phantom.exudate, small_phantom.hard, small_phantom.soft
        )
        assert samples
        assert all(fv.shape == (len(FEATURE_NAMES),) for fv, _ in samples)
        assert {cls for _, cls in samples} <= set(ExudateClass)

    def test_classify(self, pipeline, detection, rng):
        """Test one record per region with named features."""
        samples = [(rng.normal(0, 1, 22), ExudateClass.HARD) for _ in range(5)]
        samples += [(rng.normal(3, 1, 22), ExudateClass.OUTLIER) for _ in range(5)]
        model = train(samples, ClassifierParams())

        records = pipeline.classify(detection, model)
        assert len(records) == len(detection.regions)
        for record, region in zip(records, detection.regions):
            assert record.label == region.label
            assert record.cls in (ExudateClass.HARD, ExudateClass.OUTLIER)
            assert list(record.features) == FEATURE_NAMES

    def test_classify_failure_names_stage(self, pipeline, detection, rng, monkeypatch):
        """Test that unexpected feature errors are wrapped with the classify stage."""
        samples = [(rng.normal(0, 1, 22), ExudateClass.HARD) for _ in range(5)]
        samples += [(rng.normal(3, 1, 22), ExudateClass.SOFT) for _ in range(5)]
        model = train(samples, ClassifierParams())

        def broken(*args, **kwargs):
            raise IndexError("region outside the raster")

        monkeypatch.setattr("retinakit.pipeline.extract_features", broken)
        assert detection.regions
        with pytest.raises(PipelineError) as exc:
            pipeline.classify(detection, model)
        assert exc.value.stage == "classify"
        assert exc.value.exit_code == 3

    def test_grade_rescales_landmarks(self, pipeline, small_phantom):
        """Test grading a mask smaller than the landmark image."""
        mask = BinaryMask.empty((64, 80))
        result = pipeline.grade(mask, small_phantom.landmarks)
        assert result.grade == SeverityLevel.NONE
        scale = 80 / pipeline.config.severity.reference_width
        assert result.per_center["fovea"].radii[0] == pytest.approx(80.0 * scale)

    def test_grade_detection(self, pipeline, detection, small_phantom):
        """Test grading the full-resolution candidate mask."""
        mask = detection.full_mask()
        result = pipeline.grade(mask, small_phantom.landmarks)
        assert set(result.per_center) == {"fovea", "optic_disc"}
        for center in result.per_center.values():
            assert sum(center.band_counts) <= mask.count()


@pytest.mark.slow
class TestPhantomScreening:
    """Default-configuration runs on full-size phantom sets."""

    def test_detection_on_twenty_phantoms(self):
        """Test pixel sensitivity and predictivity, flare rejection and runtime."""
        pipeline = ExudatePipeline()
        counts = []
        flares_rejected = 0
        for seed in range(20):
            phantom = generate_phantom(PhantomSpec(seed=seed))
            start = time.perf_counter()
            detection = pipeline.detect(phantom.image)
            assert time.perf_counter() - start < 5.0
            assert detection.working.shape == (320, 400)

            mask = detection.full_mask()
            counts.append(confusion(mask, phantom.exudate))
            if not (mask.bits & phantom.flares.bits).any():
                flares_rejected += 1

        r = rates(micro_aggregate(counts))
        assert r.se >= 0.90
        assert r.pred >= 0.90
        assert flares_rejected >= 18

    def test_hard_soft_classification(self):
        """Test region accuracy of a model trained on a disjoint phantom set."""
        pipeline = ExudatePipeline()
        samples = []
        for seed in range(100, 140):
            phantom = generate_phantom(PhantomSpec(seed=seed))
            samples += pipeline.training_samples(
                phantom.image, phantom.exudate, phantom.hard, phantom.soft
            )
        model = train(samples, pipeline.config.classifier)

        correct = total = 0
        for seed in range(200, 210):
            phantom = generate_phantom(PhantomSpec(seed=seed))
            detection = pipeline.detect(phantom.image)
            truth = label_regions(detection.regions, phantom.exudate, phantom.hard, phantom.soft)
            for record, cls in zip(pipeline.classify(detection, model), truth):
                if cls in (ExudateClass.HARD, ExudateClass.SOFT):
                    total += 1
                    correct += int(record.cls == cls)

        assert total >= 40
        assert correct / total >= 0.85
