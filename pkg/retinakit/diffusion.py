"""
Edge-preserving anisotropic diffusion.

Explicit Perona-Malik scheme on 4-neighbourhoods with replicated (Neumann)
boundaries, applied to every channel independently.
"""

import logging
from typing import Union

import numpy as np

from retinakit.config import DiffusionParams
from retinakit.exceptions import ArgumentError
from retinakit.imgio import ColorSpace, RasterImage

logger = logging.getLogger("retinakit.stages")

ArrayOrFloat = Union[np.ndarray, float]


def conductance(g: ArrayOrFloat, K: float, alpha: float) -> ArrayOrFloat:
    """
    Diffusion coefficient c(g) = 1 / (1 + (g / K) ** (1 + alpha)).

    Args:
        g: Gradient magnitude(s), non-negative.
        K: Diffusion constant, > 0.
        alpha: Exponent, > 0.

    Returns:
        Coefficient(s) in (0, 1]; c(0) = 1.

    Raises:
        ArgumentError: If any gradient is negative or K/alpha are not positive.
    """
    if K <= 0 or alpha <= 0:
        raise ArgumentError(message=f"K and alpha must be positive (K={K}, alpha={alpha})")
    g_arr = np.asarray(g, dtype=np.float64)
    if np.any(g_arr < 0):
        raise ArgumentError(message="Gradient magnitude must be non-negative")
    c = 1.0 / (1.0 + (g_arr / K) ** (1.0 + alpha))
    return float(c) if c.ndim == 0 else c


def _step(plane: np.ndarray, p: DiffusionParams) -> np.ndarray:
    padded = np.pad(plane, 1, mode="edge")
    centre = padded[1:-1, 1:-1]
    update = np.zeros_like(plane)
    for neighbour in (padded[:-2, 1:-1], padded[2:, 1:-1], padded[1:-1, :-2], padded[1:-1, 2:]):
        d = neighbour - centre
        update += conductance(np.abs(d), p.K, p.alpha) * d
    return plane + p.dt * update


def diffuse_plane(plane: np.ndarray, p: DiffusionParams) -> np.ndarray:
    """Diffuse a single 2-D array; each iteration reads only the previous one."""
    out = np.asarray(plane, dtype=np.float64)
    for _ in range(p.iterations):
        out = _step(out, p)
    return out


def diffuse(img: RasterImage, p: DiffusionParams) -> RasterImage:
    """
    Run ``p.iterations`` explicit diffusion steps on every channel.

    Args:
        img: RGB (or single-channel Gray) raster.
        p: Diffusion parameters.

    Returns:
        The smoothed raster, clamped to [0, 1].

    Raises:
        ArgumentError: If the raster is in Lab space.
    """
    if img.space == ColorSpace.LAB:
        raise ArgumentError(message="diffuse expects an RGB or Gray raster")
    if p.iterations == 0:
        return img

    planes = [diffuse_plane(img.plane(i), p) for i in range(img.channels)]
    data = np.clip(np.stack(planes, axis=2), 0.0, 1.0)
    logger.debug(
        "diffusion: %d iterations, K=%g, alpha=%g, dt=%g", p.iterations, p.K, p.alpha, p.dt
    )
    return RasterImage(data, img.space)
