"""
Gaussian scale-space interest map.

For every scale of the ladder and every colour channel two responses are
computed, a smoothed absolute first derivative of Gaussian and an absolute
difference of Gaussians. The interest map of a scale is the maximum over
filters and channels; the decision map is the maximum over scales.
"""

import logging
import math
from typing import List

import numpy as np
from scipy import ndimage

from retinakit.config import ScaleSpaceParams
from retinakit.exceptions import ArgumentError
from retinakit.imgio import ColorSpace, RasterImage

logger = logging.getLogger("retinakit.stages")


def _check_sigma(sigma: float) -> None:
    if not sigma > 0:
        raise ArgumentError(message=f"sigma must be positive, got {sigma}")


def _support(sigma: float) -> np.ndarray:
    radius = int(math.ceil(3.0 * sigma))
    return np.arange(-radius, radius + 1, dtype=np.float64)


def gaussian_kernel(sigma: float) -> np.ndarray:
    """
    Sampled 1-D Gaussian of half-width ceil(3 sigma), normalised to sum 1.

    Raises:
        ArgumentError: If sigma is not positive.
    """
    _check_sigma(sigma)
    x = _support(sigma)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def gaussian_derivative_kernel(sigma: float) -> np.ndarray:
    """
    Sampled first derivative of a Gaussian.

    The kernel is odd (sums to zero) and scaled so that its first moment is
    -1, i.e. convolving it with a unit ramp yields exactly 1.
    """
    _check_sigma(sigma)
    x = _support(sigma)
    k = -x * np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / -np.sum(x * k)


def _smooth(plane: np.ndarray, g: np.ndarray) -> np.ndarray:
    tmp = ndimage.correlate1d(plane, g, axis=0, mode="nearest")
    return ndimage.correlate1d(tmp, g, axis=1, mode="nearest")


def _as_plane(img1ch: "RasterImage | np.ndarray") -> np.ndarray:
    if isinstance(img1ch, RasterImage):
        if img1ch.channels != 1:
            raise ArgumentError(message="Expected a single-channel raster")
        return img1ch.plane(0)
    plane = np.asarray(img1ch, dtype=np.float64)
    if plane.ndim != 2:
        raise ArgumentError(message=f"Expected a 2-D plane, got shape {plane.shape}")
    return plane


def derivative_response(
    img1ch: "RasterImage | np.ndarray", sigma: float, normalize: bool = True
) -> np.ndarray:
    """
    Smoothed absolute first-derivative-of-Gaussian response.

    ``max(|d/dx G*I|, |d/dy G*I|)`` smoothed again by G at the same sigma and,
    when ``normalize`` is set, multiplied by sigma.

    Args:
        img1ch: Single-channel raster or 2-D array.
        sigma: Scale, > 0.
        normalize: Apply gamma = 1 scale normalisation.

    Returns:
        Non-negative response map of the same shape.
    """
    _check_sigma(sigma)
    plane = _as_plane(img1ch)
    g = gaussian_kernel(sigma)
    dg = gaussian_derivative_kernel(sigma)

    dx = ndimage.correlate1d(
        ndimage.correlate1d(plane, g, axis=0, mode="nearest"), dg, axis=1, mode="nearest"
    )
    dy = ndimage.correlate1d(
        ndimage.correlate1d(plane, g, axis=1, mode="nearest"), dg, axis=0, mode="nearest"
    )
    response = _smooth(np.maximum(np.abs(dx), np.abs(dy)), g)
    if normalize:
        response *= sigma
    return np.maximum(response, 0.0)


def log_response(
    img1ch: "RasterImage | np.ndarray", sigma: float, k: float, normalize: bool = True
) -> np.ndarray:
    """
    Absolute difference-of-Gaussians response ``|G_{k sigma} * I - G_sigma * I|``.

    A DoG pair at ratio k approximates (k - 1) sigma^2 times the Laplacian, so
    dividing by (k - 1) yields the scale-normalised Laplacian.

    Raises:
        ArgumentError: If sigma <= 0 or k <= 1.
    """
    _check_sigma(sigma)
    if not k > 1:
        raise ArgumentError(message=f"k must exceed 1, got {k}")
    plane = _as_plane(img1ch)
    response = np.abs(
        _smooth(plane, gaussian_kernel(k * sigma)) - _smooth(plane, gaussian_kernel(sigma))
    )
    if normalize:
        response /= k - 1.0
    return response


def scale_ladder(p: ScaleSpaceParams) -> List[float]:
    """Scales sigma_i = base_sigma * k**i for i in [0, num_scales)."""
    return [p.base_sigma * p.k**i for i in range(p.num_scales)]


def _check_rgb(img: RasterImage) -> None:
    if img.space != ColorSpace.RGB:
        raise ArgumentError(
            message=f"Interest maps are built from RGB rasters, got {img.space.value}"
        )


def scale_interest_map(img: RasterImage, sigma: float, p: ScaleSpaceParams) -> np.ndarray:
    """Interest map of one scale: maximum over both filters and all channels."""
    _check_rgb(img)
    out = np.zeros(img.shape)
    for idx in range(img.channels):
        plane = img.plane(idx)
        np.maximum(out, derivative_response(plane, sigma, p.normalize), out=out)
        np.maximum(out, log_response(plane, sigma, p.k, p.normalize), out=out)
    return out


def build_gimap(img: RasterImage, p: ScaleSpaceParams) -> np.ndarray:
    """
    Build the decision map: maximum over scales of the per-scale interest maps.

    Args:
        img: RGB raster (normally the diffused working image).
        p: Scale ladder parameters.

    Returns:
        Non-negative map with the image's (height, width).
    """
    _check_rgb(img)
    dmap = np.zeros(img.shape)
    for sigma in scale_ladder(p):
        np.maximum(dmap, scale_interest_map(img, sigma, p), out=dmap)
    logger.debug("gimap: %d scales, range [%.4g, %.4g]", p.num_scales, dmap.min(), dmap.max())
    return dmap
