"""
Stage orchestration shared by the command line and the evaluation harness.

:class:`ExudatePipeline` runs resize, diffusion, interest map, enhancement,
binarisation, vessel opening, candidate refinement, component analysis and
filtering, then optionally classification and severity grading.
"""

import hashlib
import logging
import os
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from retinakit.binarize import binarize
from retinakit.classifier import SvmModel, extract_features, feature_matrix, label_regions, predict
from retinakit.config import BinarizeParams, PipelineConfig, config_digest
from retinakit.diffusion import diffuse
from retinakit.exceptions import ArgumentError, PipelineError, RetinaKitError
from retinakit.imgio import (
    BinaryMask,
    ColorSpace,
    RasterImage,
    load_interest_map,
    resize_for_processing,
    resize_mask,
    rgb_to_lab,
    save_image,
    save_interest_map,
)
from retinakit.models.exudate import ClassifiedRegion, ExudateClass
from retinakit.models.grades import SeverityGrade
from retinakit.models.landmarks import RetinalLandmarks
from retinakit.morphology import enhance_interest_map, fill_holes
from retinakit.regions import (
    Region,
    connected_components,
    filter_candidates,
    refine_candidates,
    regions_to_mask,
    remove_vessels,
)
from retinakit.scalespace import build_gimap
from retinakit.severity import grade_combined

logger = logging.getLogger("retinakit.pipeline")
stage_logger = logging.getLogger("retinakit.stages")


@dataclass
class Detection:
    """Intermediate and final products of one detection run."""

    original_shape: Tuple[int, int]
    working: RasterImage
    dmap: np.ndarray
    enhanced: np.ndarray
    binarized: BinaryMask
    candidates: BinaryMask
    regions: List[Region]
    timings: Dict[str, float] = field(default_factory=dict)

    @property
    def mask(self) -> BinaryMask:
        """Candidate mask at working resolution."""
        return regions_to_mask(self.regions, self.working.shape)

    def full_mask(self) -> BinaryMask:
        """Candidate mask at the input resolution."""
        return resize_mask(self.mask, self.original_shape)

    def dump(self, out_dir: str, stem: str) -> Dict[str, str]:
        """Write the decision map and the binarised map next to each other."""
        paths = {
            "dmap": os.path.join(out_dir, f"{stem}_dmap.npy"),
            "binarized": os.path.join(out_dir, f"{stem}_binarized.png"),
            "working": os.path.join(out_dir, f"{stem}_working.png"),
        }
        save_interest_map(self.dmap, paths["dmap"])
        save_image(self.binarized, paths["binarized"])
        save_image(self.working, paths["working"])
        return paths


class StageCache:
    """
    Decision maps on disk, keyed by image content and configuration.

    Args:
        directory: Cache directory, created on first write.
    """

    def __init__(self, directory: str):
        self.directory = directory

    @staticmethod
    def key(img: RasterImage, config: PipelineConfig) -> str:
        h = hashlib.sha256()
        h.update(str(img.data.shape).encode("ascii"))
        h.update(np.ascontiguousarray(img.data).tobytes())
        h.update(config_digest(config).encode("ascii"))
        return h.hexdigest()

    def _path(self, key: str) -> str:
        return os.path.join(self.directory, f"{key}.npy")

    def get(self, key: str) -> Optional[np.ndarray]:
        path = self._path(key)
        if not os.path.isfile(path):
            return None
        logger.debug("cache hit %s", key[:12])
        return load_interest_map(path)

    def put(self, key: str, dmap: np.ndarray) -> None:
        save_interest_map(dmap, self._path(key))


class ExudatePipeline:
    """
    End-to-end exudate detection with optional classification and grading.

    Args:
        config: Pipeline configuration; defaults when None.
        cache: Optional decision-map cache.
    """

    def __init__(self, config: Optional[PipelineConfig] = None, cache: Optional[StageCache] = None):
        self.config = config or PipelineConfig()
        self.cache = cache

    @contextmanager
    def _stage(self, name: str, timings: Dict[str, float]) -> Iterator[None]:
        start = time.perf_counter()
        try:
            yield
        except RetinaKitError:
            raise
        except Exception as e:
            raise PipelineError(message=str(e), stage=name, code="stage_failed") from e
        finally:
            timings[name] = time.perf_counter() - start
        stage_logger.debug("%s: %.3fs", name, timings[name])

    def prepare(self, img: RasterImage) -> RasterImage:
        """Resize an RGB input to the working resolution."""
        if img.space != ColorSpace.RGB:
            raise ArgumentError(message=f"Detection needs an RGB image, got {img.space.value}")
        return resize_for_processing(img, self.config.working_size)

    def decision_map(
        self, working: RasterImage, timings: Optional[Dict[str, float]] = None
    ) -> np.ndarray:
        """Diffuse the working image and build its decision map, through the cache when set."""
        timings = timings if timings is not None else {}
        key = StageCache.key(working, self.config) if self.cache else None
        if self.cache and key:
            cached = self.cache.get(key)
            if cached is not None and cached.shape == working.shape:
                return cached

        with self._stage("diffusion", timings):
            smoothed = diffuse(working, self.config.diffusion)
        with self._stage("gimap", timings):
            dmap = build_gimap(smoothed, self.config.scalespace)

        if self.cache and key:
            self.cache.put(key, dmap)
        return dmap

    def detect(self, img: RasterImage) -> Detection:
        """
        Run the detection stages on an RGB image.

        Returns:
            The detection with every intermediate product.

        Raises:
            ArgumentError: If the image is not RGB.
            PipelineError: If a stage fails.
        """
        timings: Dict[str, float] = {}
        with self._stage("resize", timings):
            working = self.prepare(img)
        dmap = self.decision_map(working, timings)
        return self._finish(img.shape, working, dmap, timings)

    def detect_from_map(self, img: RasterImage, dmap: np.ndarray) -> Detection:
        """
        Resume detection from a previously dumped decision map.

        Raises:
            ArgumentError: If the map does not match the working resolution.
        """
        timings: Dict[str, float] = {}
        working = self.prepare(img)
        if dmap.shape != working.shape:
            raise ArgumentError(
                message=f"Decision map {dmap.shape} does not match working size {working.shape}"
            )
        return self._finish(img.shape, working, dmap, timings)

    def _finish(
        self,
        original_shape: Tuple[int, int],
        working: RasterImage,
        dmap: np.ndarray,
        timings: Dict[str, float],
    ) -> Detection:
        with self._stage("enhance", timings):
            enhanced = enhance_interest_map(dmap, self.config.morphology.enhance_disk_radii)
        binarized, refined, regions = self.segment(
            working, dmap, enhanced, self.config.binarize, timings
        )

        logger.info("detected %d candidate regions", len(regions))
        return Detection(
            original_shape=original_shape,
            working=working,
            dmap=dmap,
            enhanced=enhanced,
            binarized=binarized,
            candidates=refined,
            regions=regions,
            timings=timings,
        )

    def segment(
        self,
        working: RasterImage,
        dmap: np.ndarray,
        enhanced: np.ndarray,
        params: BinarizeParams,
        timings: Optional[Dict[str, float]] = None,
    ) -> Tuple[BinaryMask, BinaryMask, List[Region]]:
        """
        Turn an enhanced map into filtered candidate regions.

        Returns:
            ``(binarized, refined candidates, surviving regions)``.
        """
        cfg = self.config
        timings = timings if timings is not None else {}
        with self._stage("binarize", timings):
            binarized = binarize(enhanced, params)
        with self._stage("opening", timings):
            opened = fill_holes(remove_vessels(binarized, cfg.morphology.vessel_se_side))
        with self._stage("refine", timings):
            refined = refine_candidates(opened, working, cfg.refine)
        with self._stage("regions", timings):
            regions = filter_candidates(connected_components(refined), dmap, working, cfg.regions)
        return binarized, refined, regions

    def classify(self, detection: Detection, model: SvmModel) -> List[ClassifiedRegion]:
        """
        Predict the class of every detected region.

        Raises:
            PipelineError: If feature extraction or prediction fails unexpectedly.
        """
        results = []
        ring = self.config.classifier.contrast_ring
        with self._stage("classify", {}):
            lab = rgb_to_lab(detection.working)
            for r in detection.regions:
                fv = extract_features(r, detection.working, lab, detection.dmap, ring)
                cls, votes = predict(model, fv)
                results.append(
                    ClassifiedRegion(
                        label=r.label,
                        cls=cls,
                        votes=votes,
                        area=r.area,
                        centroid=r.centroid,
                        bbox=r.bbox,
                        features=dict(zip(model.feature_names, (float(v) for v in fv))),
                    )
                )
        return results

    def training_samples(
        self,
        img: RasterImage,
        exudate: BinaryMask,
        hard: Optional[BinaryMask] = None,
        soft: Optional[BinaryMask] = None,
    ) -> List[Tuple[np.ndarray, ExudateClass]]:
        """Detect candidates and label them from annotation masks."""
        detection = self.detect(img)
        shape = detection.working.shape

        def scaled(mask: Optional[BinaryMask]) -> Optional[BinaryMask]:
            return resize_mask(mask, shape) if mask is not None else None

        labels = label_regions(
            detection.regions, resize_mask(exudate, shape), scaled(hard), scaled(soft)
        )
        X = feature_matrix(
            detection.regions,
            detection.working,
            rgb_to_lab(detection.working),
            detection.dmap,
            self.config.classifier.contrast_ring,
        )
        return [(X[i], c) for i, c in enumerate(labels) if c is not None]

    def grade(self, mask: BinaryMask, landmarks: RetinalLandmarks) -> SeverityGrade:
        """Grade a mask; landmarks are mapped onto the mask size when they differ."""
        if (landmarks.image_height, landmarks.image_width) != mask.shape:
            landmarks = landmarks.rescaled(mask.width, mask.height)
        return grade_combined(mask, landmarks, self.config.severity)
