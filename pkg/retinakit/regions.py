"""
Connected components, region descriptors and candidate filtering.

A :class:`Region` is an 8-connected set of pixels with its shape descriptors:
area, boundary length, convex hull area, second-moment ellipse and bounding
box. :func:`filter_candidates` applies the geometric and photometric gates that
separate exudate candidates from vessel remnants, flares and dark structures.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import cv2
import numpy as np
from scipy import ndimage
from scipy.spatial import ConvexHull, QhullError
from skimage import measure

from retinakit.config import RefineParams, RegionParams
from retinakit.exceptions import ArgumentError
from retinakit.imgio import BinaryMask, RasterImage
from retinakit.morphology import Disk, Square, dilate, fill_holes, opening, white_tophat

logger = logging.getLogger("retinakit.stages")

GREEN = 1

_CROSS = ndimage.generate_binary_structure(2, 1)


@dataclass
class Region:
    """
    One connected component and its descriptors.

    ``rows``/``cols`` hold the pixel coordinates; ``bbox`` is
    ``(min_row, min_col, max_row, max_col)`` with exclusive maxima.
    """

    label: int
    rows: np.ndarray
    cols: np.ndarray
    area: int
    perimeter: float
    hull_area: float
    centroid: Tuple[float, float]
    bbox: Tuple[int, int, int, int]
    eccentricity: float
    major_axis: float
    minor_axis: float
    extent: float
    _local: Optional[np.ndarray] = field(default=None, repr=False)

    def local_mask(self) -> np.ndarray:
        """Boolean mask of the region inside its bounding box."""
        if self._local is None:
            r0, c0, r1, c1 = self.bbox
            local = np.zeros((r1 - r0, c1 - c0), dtype=bool)
            local[self.rows - r0, self.cols - c0] = True
            self._local = local
        return self._local

    def to_mask(self, shape: Tuple[int, int]) -> np.ndarray:
        out = np.zeros(shape, dtype=bool)
        out[self.rows, self.cols] = True
        return out

    def boundary(self) -> Tuple[np.ndarray, np.ndarray]:
        """Pixels of the region with at least one 4-neighbour outside it."""
        local = self.local_mask()
        inner = ndimage.binary_erosion(local, structure=_CROSS, border_value=0)
        ys, xs = np.nonzero(local & ~inner)
        return ys + self.bbox[0], xs + self.bbox[1]

    def mean_edge_gradient(self, values: np.ndarray) -> float:
        """Mean of ``values`` over the boundary pixels."""
        ys, xs = self.boundary()
        return float(np.asarray(values)[ys, xs].mean())


def _perimeter(local: np.ndarray) -> float:
    padded = np.pad(local.astype(np.uint8), 1)
    contours, _ = cv2.findContours(padded, cv2.RETR_EXTERNAL, cv2.CHAIN_APPROX_NONE)
    return float(sum(cv2.arcLength(c, True) for c in contours))


def _hull_area(rows: np.ndarray, cols: np.ndarray, area: int) -> float:
    # lattice points inside the hull of the pixel centres
    if area < 3:
        return float(area)
    points = np.column_stack([cols, rows]).astype(np.float64)
    try:
        hull = ConvexHull(points)
    except QhullError:
        return float(area)

    y, x = np.mgrid[rows.min() : rows.max() + 1, cols.min() : cols.max() + 1]
    inside = np.ones(x.shape, dtype=bool)
    for a, b, c in hull.equations:
        inside &= a * x + b * y + c <= 1e-9
    return float(max(int(inside.sum()), area))


def _moments(rows: np.ndarray, cols: np.ndarray) -> Tuple[float, float, float]:
    x = cols.astype(np.float64)
    y = rows.astype(np.float64)
    # unit-pixel convention: each pixel contributes a uniform square
    mu_xx = x.var() + 1.0 / 12.0
    mu_yy = y.var() + 1.0 / 12.0
    mu_xy = float(((x - x.mean()) * (y - y.mean())).mean())
    half_trace = 0.5 * (mu_xx + mu_yy)
    root = math.sqrt(max(0.25 * (mu_xx - mu_yy) ** 2 + mu_xy * mu_xy, 0.0))
    lam1 = half_trace + root
    lam2 = max(half_trace - root, 0.0)
    major = 4.0 * math.sqrt(lam1)
    minor = 4.0 * math.sqrt(lam2)
    ecc = math.sqrt(max(1.0 - lam2 / lam1, 0.0))
    return ecc, major, minor


def describe(label: int, rows: np.ndarray, cols: np.ndarray) -> Region:
    """Compute every descriptor of one pixel set."""
    area = int(rows.size)
    if area == 0:
        raise ArgumentError(message="Region has no pixels")
    bbox = (int(rows.min()), int(cols.min()), int(rows.max()) + 1, int(cols.max()) + 1)
    region = Region(
        label=label,
        rows=rows,
        cols=cols,
        area=area,
        perimeter=0.0,
        hull_area=_hull_area(rows, cols, area),
        centroid=(float(cols.mean()), float(rows.mean())),
        bbox=bbox,
        eccentricity=0.0,
        major_axis=0.0,
        minor_axis=0.0,
        extent=area / float((bbox[2] - bbox[0]) * (bbox[3] - bbox[1])),
    )
    region.perimeter = _perimeter(region.local_mask())
    region.eccentricity, region.major_axis, region.minor_axis = _moments(rows, cols)
    return region


def connected_components(mask: BinaryMask) -> List[Region]:
    """
    Label a mask with 8-connectivity and describe every component.

    Args:
        mask: Candidate mask.

    Returns:
        Regions ordered by label (raster order of first pixel).
    """
    labels = measure.label(mask.bits, connectivity=2)
    regions = [
        describe(p.label, p.coords[:, 0], p.coords[:, 1]) for p in measure.regionprops(labels)
    ]
    logger.debug("components: %d regions, %d pixels", len(regions), mask.count())
    return regions


def solidity(r: Region) -> float:
    """Area over convex hull area."""
    return r.area / r.hull_area


def compactness(r: Region) -> float:
    """
    Raw compactness A / P^2.

    Raises:
        ArgumentError: If the region has zero perimeter (a single pixel).
    """
    if r.perimeter <= 0:
        raise ArgumentError(message=f"Region {r.label} has zero perimeter")
    return r.area / (r.perimeter * r.perimeter)


def circularity(r: Region) -> float:
    """Normalised compactness 4 pi A / P^2; 0 for zero-perimeter regions."""
    if r.perimeter <= 0:
        return 0.0
    return 4.0 * math.pi * compactness(r)


def remove_vessels(mask: BinaryMask, side: int) -> BinaryMask:
    """Binary opening with a square wider than the vessel calibre."""
    return opening(mask, Square(side))


def refine_candidates(mask: BinaryMask, img: RasterImage, p: RefineParams) -> BinaryMask:
    """
    Reshape candidates to the bright lesion core they contain.

    Each hole-filled, slightly grown candidate keeps only the pixels whose
    green top-hat reaches ``p.relative_level`` of the candidate's peak;
    candidates whose peak stays below ``p.min_peak_contrast`` are dropped.

    Args:
        mask: Candidate mask after vessel removal.
        img: Working RGB raster.
        p: Refinement parameters.

    Returns:
        The refined mask (``mask`` unchanged when refinement is disabled).
    """
    if not p.enabled or mask.count() == 0:
        return mask
    if mask.shape != img.shape:
        raise ArgumentError(message=f"Mask {mask.shape} and image {img.shape} differ in size")

    grown = fill_holes(mask)
    if p.grow > 0:
        grown = dilate(grown, Disk(p.grow))
    tophat = white_tophat(img.plane(GREEN), Square(p.background_side))

    labels, count = ndimage.label(grown.bits, structure=np.ones((3, 3)))
    peaks = np.zeros(count + 1)
    peaks[1:] = ndimage.maximum(tophat, labels, index=np.arange(1, count + 1))
    peak = peaks[labels]
    keep = (labels > 0) & (peak >= p.min_peak_contrast) & (tophat >= p.relative_level * peak)
    strong = int((peaks[1:] >= p.min_peak_contrast).sum())
    logger.debug("refine: %d candidates, %d above contrast", count, strong)
    return BinaryMask(keep)


def filter_candidates(
    regions: List[Region], dmap: np.ndarray, img: RasterImage, cfg: RegionParams
) -> List[Region]:
    """
    Keep regions that pass every candidate gate.

    A region survives when its solidity reaches ``cfg.min_solidity``, its area
    lies in ``[cfg.min_area, cfg.max_area * image pixels]``, its minor axis
    reaches ``cfg.min_minor_axis``, it is not a flare (circularity at or above
    ``cfg.max_circularity`` with area at least ``cfg.flare_min_area``) and, with
    the brightness prefilter on, its mean green exceeds the image mean green.

    Args:
        regions: Components of the post-opening mask.
        dmap: Decision map of the same image.
        img: Working RGB raster.
        cfg: Gate thresholds.

    Returns:
        The surviving regions, in input order.
    """
    if np.asarray(dmap).shape != img.shape:
        raise ArgumentError(
            message=f"Map {np.asarray(dmap).shape} and image {img.shape} differ in size"
        )

    green = img.plane(GREEN)
    green_mean = float(green.mean())
    max_area = cfg.max_area * img.height * img.width

    kept = []
    for r in regions:
        if not cfg.min_area <= r.area <= max_area:
            continue
        if solidity(r) < cfg.min_solidity:
            continue
        if r.minor_axis < cfg.min_minor_axis:
            continue
        if r.area >= cfg.flare_min_area and circularity(r) >= cfg.max_circularity:
            continue
        if cfg.brightness_prefilter and float(green[r.rows, r.cols].mean()) <= green_mean:
            continue
        kept.append(r)
    logger.debug("filter: %d of %d regions kept", len(kept), len(regions))
    return kept


def regions_to_mask(regions: List[Region], shape: Tuple[int, int]) -> BinaryMask:
    """Union of region pixels as a mask."""
    bits = np.zeros(shape, dtype=bool)
    for r in regions:
        bits[r.rows, r.cols] = True
    return BinaryMask(bits)
