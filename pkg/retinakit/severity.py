"""
Severity grading from exudate locations.

Two systems of concentric circles, centred on the fovea and on the optic disc,
split the retina into bands. Exudate load per band, compared with a fixed
fraction of the band area, decides the grade of each system; the overall grade
is the worse of the two.
"""

import logging
from dataclasses import dataclass
from typing import Callable, List, Sequence, Tuple, Union

import numpy as np

from retinakit.config import SeverityParams
from retinakit.exceptions import ArgumentError
from retinakit.imgio import BinaryMask
from retinakit.models.grades import CenterGrade, SeverityGrade, SeverityLevel
from retinakit.models.landmarks import RetinalLandmarks
from retinakit.regions import Region

logger = logging.getLogger("retinakit.stages")

Weight = Union[float, Callable[[float], float]]

# grade reached when the load of band i exceeds its threshold
LADDER: List[SeverityLevel] = [
    SeverityLevel.PROLIFERATE,
    SeverityLevel.SEVERE,
    SeverityLevel.MODERATE,
    SeverityLevel.MILD,
]


@dataclass(frozen=True)
class CircleSystem:
    """Concentric circles around one landmark; band N is r_{N-1} < d <= r_N."""

    name: str
    center: Tuple[float, float]
    radii: Tuple[float, ...]
    band_areas: Tuple[int, ...]

    def distances(self, shape: Tuple[int, int]) -> np.ndarray:
        ys, xs = np.ogrid[: shape[0], : shape[1]]
        return np.hypot(xs - self.center[0], ys - self.center[1])

    def band_of(self, distance: float) -> int:
        """1-based band index of a distance, 0 beyond the outermost circle."""
        for idx, r in enumerate(self.radii):
            if distance <= r:
                return idx + 1
        return 0

    def band_map(self, shape: Tuple[int, int]) -> np.ndarray:
        """Band index of every pixel (0 outside the circles)."""
        d = self.distances(shape)
        bands = np.searchsorted(np.asarray(self.radii), d, side="left") + 1
        bands[d > self.radii[-1]] = 0
        return bands

    def thresholds(self, load_fraction: float) -> List[float]:
        return [a * load_fraction for a in self.band_areas]


def _system(
    name: str, center: Tuple[float, float], step: float, scale: float, levels: int, shape
) -> CircleSystem:
    radii = tuple(scale * step * (k + 1) for k in range(levels))
    partial = CircleSystem(name, center, radii, ())
    bands = partial.band_map(shape)
    areas = tuple(int(np.count_nonzero(bands == k + 1)) for k in range(levels))
    return CircleSystem(name, center, radii, areas)


def build_circles(
    lm: RetinalLandmarks, p: SeverityParams = SeverityParams()
) -> Tuple[CircleSystem, CircleSystem]:
    """
    Build the fovea and optic-disc circle systems.

    Radii are multiples of ``p.fovea_step`` and ``p.optic_disc_step`` scaled
    by ``image_width / p.reference_width``; band areas count pixel centres
    inside the image.

    Raises:
        ArgumentError: If either centre lies outside the image.
    """
    if not lm.inside():
        raise ArgumentError(
            message=f"Landmarks outside the {lm.image_width}x{lm.image_height} image"
        )
    scale = lm.image_width / p.reference_width
    shape = (lm.image_height, lm.image_width)
    fovea = _system("fovea", lm.fovea, p.fovea_step, scale, p.levels, shape)
    disc = _system("optic_disc", lm.optic_disc, p.optic_disc_step, scale, p.levels, shape)
    return fovea, disc


def band_counts(mask: BinaryMask, circles: CircleSystem) -> List[int]:
    """Exudate pixels per band."""
    bands = circles.band_map(mask.shape)[mask.bits]
    return [int(np.count_nonzero(bands == k + 1)) for k in range(len(circles.radii))]


def grade_counts(counts: Sequence[int], thresholds: Sequence[float]) -> SeverityLevel:
    """
    Apply the grading ladder to per-band counts.

    Band i lifts the grade to ``LADDER[i]`` when its count exceeds its
    threshold and to the next lower grade when it is positive but within the
    threshold; the outermost band grades Mild for any exudate. The highest
    grade reached wins.
    """
    best = SeverityLevel.NONE
    last = len(counts) - 1
    for i, (n, t) in enumerate(zip(counts, thresholds)):
        if n <= 0:
            continue
        if i == last and i == len(LADDER) - 1:
            level = SeverityLevel.MILD
        elif n > t:
            level = LADDER[i]
        else:
            level = LADDER[min(i + 1, len(LADDER) - 1)]
        if level.rank > best.rank:
            best = level
    return best


def grade(
    mask: BinaryMask, circles: CircleSystem, load_fraction: float = 1.0 / 16.0
) -> CenterGrade:
    """Grade one circle system."""
    counts = band_counts(mask, circles)
    level = grade_counts(counts, circles.thresholds(load_fraction))
    return CenterGrade(
        center=circles.name,
        grade=level,
        radii=list(circles.radii),
        band_areas=list(circles.band_areas),
        band_counts=counts,
    )


def _weight(w: Weight, distance: float) -> float:
    return float(w(distance)) if callable(w) else float(w)


def severity_score(
    regions: Sequence[Region], circles: CircleSystem, c1: Weight = 0.5, c2: Weight = 0.5
) -> List[float]:
    """
    Continuous score c1 * A + c2 / D per region.

    A is the region area and D the centroid distance to the circle centre,
    floored at one pixel. Weights are constants or functions of D.
    """
    scores = []
    cx, cy = circles.center
    for r in regions:
        d = max(float(np.hypot(r.centroid[0] - cx, r.centroid[1] - cy)), 1.0)
        scores.append(_weight(c1, d) * r.area + _weight(c2, d) / d)
    return scores


def grade_combined(
    mask: BinaryMask, lm: RetinalLandmarks, p: SeverityParams = SeverityParams()
) -> SeverityGrade:
    """
    Grade both circle systems; the overall grade is the higher one.

    Raises:
        ArgumentError: If the mask size differs from the landmark image size.
    """
    if mask.shape != (lm.image_height, lm.image_width):
        raise ArgumentError(
            message=f"Mask {mask.shape} does not match landmark image "
            f"{lm.image_height}x{lm.image_width}"
        )
    per_center = {c.name: grade(mask, c, p.load_fraction) for c in build_circles(lm, p)}
    overall = max((g.grade for g in per_center.values()), key=lambda level: level.rank)
    detail = ", ".join(f"{k}={v.grade.value}" for k, v in per_center.items())
    logger.debug("severity: %s (%s)", overall.value, detail)
    return SeverityGrade(grade=overall, per_center=per_center)
