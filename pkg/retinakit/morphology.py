"""
Grayscale and binary mathematical morphology.

Operators accept either a float interest map (``np.ndarray``) or a
:class:`~retinakit.imgio.BinaryMask` and return the same kind. Pixels outside
the image act as -inf for dilation and +inf for erosion (false/true for masks),
so borders never leak into the result.
"""

from dataclasses import dataclass
from typing import Iterable, TypeVar, Union

import numpy as np
from scipy import ndimage

from retinakit.exceptions import ArgumentError
from retinakit.imgio import BinaryMask

MapLike = TypeVar("MapLike", np.ndarray, BinaryMask)


@dataclass(frozen=True)
class StructuringElement:
    """A centred footprint; ``footprint[r, r]`` is the origin."""

    kind: str
    footprint: np.ndarray

    @classmethod
    def disk(cls, radius: int) -> "StructuringElement":
        """Offsets (dx, dy) with dx^2 + dy^2 <= radius^2."""
        if radius < 0:
            raise ArgumentError(message=f"Disk radius must be >= 0, got {radius}")
        y, x = np.mgrid[-radius : radius + 1, -radius : radius + 1]
        return cls("disk", (x * x + y * y) <= radius * radius)

    @classmethod
    def square(cls, side: int) -> "StructuringElement":
        if side < 1 or side % 2 == 0:
            raise ArgumentError(message=f"Square side must be odd and positive, got {side}")
        return cls("square", np.ones((side, side), dtype=bool))

    @classmethod
    def rect(cls, width: int, height: int) -> "StructuringElement":
        if min(width, height) < 1 or width % 2 == 0 or height % 2 == 0:
            raise ArgumentError(
                message=f"Rect sides must be odd and positive, got {width}x{height}"
            )
        return cls("rect", np.ones((height, width), dtype=bool))

    def offsets(self) -> set:
        """Set of (dx, dy) offsets; always contains (0, 0)."""
        cy, cx = self.footprint.shape[0] // 2, self.footprint.shape[1] // 2
        ys, xs = np.nonzero(self.footprint)
        return {(int(x - cx), int(y - cy)) for y, x in zip(ys, xs)}


Disk = StructuringElement.disk
Square = StructuringElement.square
Rect = StructuringElement.rect


def _grey(values: np.ndarray) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise ArgumentError(message=f"Interest map must be 2-D, got shape {arr.shape}")
    return arr


def dilate(m: MapLike, se: StructuringElement) -> MapLike:
    """Max-filter (grayscale) or union of translates (binary)."""
    if isinstance(m, BinaryMask):
        return BinaryMask(ndimage.binary_dilation(m.bits, structure=se.footprint, border_value=0))
    return ndimage.maximum_filter(_grey(m), footprint=se.footprint, mode="constant", cval=-np.inf)


def erode(m: MapLike, se: StructuringElement) -> MapLike:
    """Min-filter (grayscale) or intersection of translates (binary)."""
    if isinstance(m, BinaryMask):
        return BinaryMask(ndimage.binary_erosion(m.bits, structure=se.footprint, border_value=1))
    return ndimage.minimum_filter(_grey(m), footprint=se.footprint, mode="constant", cval=np.inf)


def opening(m: MapLike, se: StructuringElement) -> MapLike:
    """Erosion followed by dilation."""
    return dilate(erode(m, se), se)


def closing(m: MapLike, se: StructuringElement) -> MapLike:
    """Dilation followed by erosion."""
    return erode(dilate(m, se), se)


def white_tophat(values: np.ndarray, se: StructuringElement) -> np.ndarray:
    """Map minus its opening; isolates bright detail smaller than ``se``."""
    arr = _grey(values)
    return arr - opening(arr, se)


def fill_holes(mask: BinaryMask) -> BinaryMask:
    """Fill background components not connected to the image border."""
    return BinaryMask(ndimage.binary_fill_holes(mask.bits))


def enhance_interest_map(m: np.ndarray, radii: Union[Iterable[int], None] = None) -> np.ndarray:
    """
    Pointwise maximum of disk closings of the interest map.

    Args:
        m: The decision map.
        radii: Disk radii, (2, 3) by default.

    Returns:
        The enhanced map; never below ``m``.
    """
    arr = _grey(m)
    out = arr.copy()
    for r in radii if radii is not None else (2, 3):
        np.maximum(out, closing(arr, Disk(r)), out=out)
    return out
