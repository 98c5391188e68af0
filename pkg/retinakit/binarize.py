"""
Sauvola local adaptive thresholding.

Window means and deviations come from summed-area tables, so every window
statistic costs four lookups regardless of the window size.
"""

import logging
from typing import Tuple

import numpy as np

from retinakit.config import BinarizeParams, SauvolaParams
from retinakit.exceptions import ArgumentError
from retinakit.imgio import BinaryMask

logger = logging.getLogger("retinakit.stages")


def integral_stats(m: np.ndarray) -> Tuple[np.ndarray, np.ndarray, float]:
    """
    Summed-area tables of a map and of its square.

    Sums are taken over ``m - shift`` with ``shift`` the map mean, which keeps
    the squared table well conditioned. Tables carry a leading zero row and
    column, so the sum over rows ``[y0, y1)`` and columns ``[x0, x1)`` is
    ``S[y1, x1] - S[y0, x1] - S[y1, x0] + S[y0, x0]``.

    Args:
        m: 2-D finite map.

    Returns:
        ``(sum_table, sq_table, shift)``.
    """
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim != 2:
        raise ArgumentError(message=f"Map must be 2-D, got shape {arr.shape}")
    shift = float(arr.mean()) if arr.size else 0.0
    centred = arr - shift
    h, w = arr.shape
    s = np.zeros((h + 1, w + 1))
    sq = np.zeros((h + 1, w + 1))
    s[1:, 1:] = centred.cumsum(axis=0).cumsum(axis=1)
    sq[1:, 1:] = (centred * centred).cumsum(axis=0).cumsum(axis=1)
    return s, sq, shift


def window_sum(table: np.ndarray, y0: int, x0: int, y1: int, x1: int) -> float:
    """Inclusion-exclusion lookup of a rectangle ``[y0, y1) x [x0, x1)``."""
    return float(table[y1, x1] - table[y0, x1] - table[y1, x0] + table[y0, x0])


def window_stats(m: np.ndarray, window: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Mean and standard deviation of the ``window x window`` neighbourhood of
    every pixel, with replicated borders.
    """
    r = window // 2
    padded = np.pad(np.asarray(m, dtype=np.float64), r, mode="edge")
    s, sq, shift = integral_stats(padded)
    h, w = np.asarray(m).shape
    n = float(window * window)

    def boxes(t: np.ndarray) -> np.ndarray:
        lower = t[window : window + h]
        upper = t[:h]
        inner = lower[:, window : window + w] - upper[:, window : window + w]
        return inner - lower[:, :w] + upper[:, :w]

    sums = boxes(s)
    sqs = boxes(sq)
    mean_c = sums / n
    var = np.maximum(sqs / n - mean_c * mean_c, 0.0)
    return mean_c + shift, np.sqrt(var)


def sauvola_threshold(m: np.ndarray, p: SauvolaParams) -> BinaryMask:
    """
    Binarize a map with th = mean * (1 + c * (std / max_std - 1)).

    Args:
        m: Non-negative interest map.
        p: Window side and sensitivity.

    Returns:
        Mask of pixels strictly above their local threshold. A perfectly flat
        map (max_std == 0) yields an all-false mask.

    Raises:
        ArgumentError: If the window exceeds either image dimension.
    """
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim != 2:
        raise ArgumentError(message=f"Map must be 2-D, got shape {arr.shape}")
    if p.window > min(arr.shape):
        raise ArgumentError(message=f"Window {p.window} larger than image {arr.shape}")

    mean, std = window_stats(arr, p.window)
    big_sigma = float(std.max())
    if big_sigma <= 0.0:
        return BinaryMask.empty(arr.shape)

    threshold = mean * (1.0 + p.c * (std / big_sigma - 1.0))
    return BinaryMask(arr > threshold)


def significance_floor(m: np.ndarray, min_response: float) -> BinaryMask:
    """Pixels whose absolute response exceeds ``min_response``."""
    return BinaryMask(np.asarray(m, dtype=np.float64) > min_response)


def binarize(m: np.ndarray, p: BinarizeParams) -> BinaryMask:
    """Sauvola mask intersected with the absolute response floor."""
    local = sauvola_threshold(m, p.sauvola())
    mask = BinaryMask(local.bits & significance_floor(m, p.min_response).bits)
    logger.debug(
        "binarize: window=%d c=%.3f, %d of %d pixels set",
        p.window,
        p.c,
        mask.count(),
        mask.bits.size,
    )
    return mask
