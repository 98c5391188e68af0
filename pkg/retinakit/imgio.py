"""
Image representation and file I/O for retinakit.

This module provides the raster types every stage operates on, PNG/PPM
decoding, PNG encoding, the working-resolution resize and the CIELAB
conversion. Samples are float64 in [0, 1] from load onward.
"""

import logging
import os
from dataclasses import dataclass
from enum import Enum
from typing import Tuple, Union

import cv2
import numpy as np
from skimage import color

from retinakit.exceptions import ArgumentError, ImageFormatError, ImageIOError

logger = logging.getLogger("retinakit")

SUPPORTED_EXTENSIONS = (".png", ".ppm")
WORKING_SIZE = 400


class ColorSpace(str, Enum):
    """Color space tag of a raster."""

    RGB = "RGB"
    LAB = "Lab"
    GRAY = "Gray"


@dataclass(frozen=True)
class RasterImage:
    """
    Multi-channel floating-point image.

    ``data`` has shape (height, width, channels); RGB and Gray samples lie in
    [0, 1], Lab samples keep their native ranges.
    """

    data: np.ndarray
    space: ColorSpace = ColorSpace.RGB

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 2:
            data = data[:, :, np.newaxis]
        if data.ndim != 3 or data.shape[2] not in (1, 3):
            raise ArgumentError(message=f"Raster must have 1 or 3 channels, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ArgumentError(message="Raster contains NaN or Inf samples")
        if self.space != ColorSpace.LAB and data.size and (data.min() < 0.0 or data.max() > 1.0):
            raise ArgumentError(message=f"{self.space.value} samples must lie in [0, 1]")
        if self.space == ColorSpace.RGB and data.shape[2] != 3:
            raise ArgumentError(message="RGB rasters need three channels")
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return int(self.data.shape[0])

    @property
    def width(self) -> int:
        return int(self.data.shape[1])

    @property
    def channels(self) -> int:
        return int(self.data.shape[2])

    @property
    def shape(self) -> Tuple[int, int]:
        """(height, width) of the raster."""
        return self.height, self.width

    def plane(self, idx: int) -> np.ndarray:
        """Return channel ``idx`` as a 2-D array view."""
        return self.data[:, :, idx]


@dataclass(frozen=True)
class BinaryMask:
    """One boolean per pixel, shape (height, width)."""

    bits: np.ndarray

    def __post_init__(self) -> None:
        bits = np.asarray(self.bits).astype(bool)
        if bits.ndim != 2:
            raise ArgumentError(message=f"Mask must be 2-D, got shape {bits.shape}")
        object.__setattr__(self, "bits", bits)

    @property
    def height(self) -> int:
        return int(self.bits.shape[0])

    @property
    def width(self) -> int:
        return int(self.bits.shape[1])

    @property
    def shape(self) -> Tuple[int, int]:
        return self.height, self.width

    def count(self) -> int:
        """Number of true pixels."""
        return int(self.bits.sum())

    @classmethod
    def empty(cls, shape: Tuple[int, int]) -> "BinaryMask":
        return cls(np.zeros(shape, dtype=bool))


def _check_readable(path: str) -> None:
    if not os.path.isfile(path):
        raise ImageIOError(message="Image file not found", code="not_found", path=path)
    if not path.lower().endswith(SUPPORTED_EXTENSIONS):
        raise ImageFormatError(
            message="Only PNG and PPM files are supported", code="format", path=path
        )


def _read_raw(path: str) -> np.ndarray:
    _check_readable(path)
    try:
        raw = cv2.imread(path, cv2.IMREAD_UNCHANGED)
    except cv2.error as e:
        raise ImageFormatError(message=f"Cannot decode image: {e}", code="format", path=path) from e
    if raw is None:
        raise ImageFormatError(message="Cannot decode image", code="format", path=path)
    if raw.dtype not in (np.uint8, np.uint16):
        raise ImageFormatError(
            message=f"Unsupported sample type {raw.dtype}", code="format", path=path
        )
    return raw


def load_image(path: str) -> RasterImage:
    """
    Load an 8- or 16-bit PNG or binary PPM as an RGB raster.

    Integer samples are divided by the maximum code value of their bit depth.
    Grayscale files are replicated to three channels; alpha is dropped.

    Args:
        path: Path to the file.

    Returns:
        An RGB RasterImage with samples in [0, 1].

    Raises:
        ImageIOError: If the file does not exist.
        ImageFormatError: If the file is not a decodable PNG/PPM.
    """
    raw = _read_raw(path)
    max_code = float(np.iinfo(raw.dtype).max)

    if raw.ndim == 2:
        rgb = np.repeat(raw[:, :, np.newaxis], 3, axis=2)
    elif raw.shape[2] == 4:
        rgb = cv2.cvtColor(raw, cv2.COLOR_BGRA2RGB)
    elif raw.shape[2] == 3:
        rgb = cv2.cvtColor(raw, cv2.COLOR_BGR2RGB)
    else:
        raise ImageFormatError(
            message=f"Unsupported channel count {raw.shape[2]}", code="format", path=path
        )

    logger.debug("Loaded %s (%dx%d, %s)", path, rgb.shape[1], rgb.shape[0], raw.dtype)
    return RasterImage(rgb.astype(np.float64) / max_code, ColorSpace.RGB)


def load_mask(path: str) -> BinaryMask:
    """
    Load an annotation mask; a pixel is positive when any channel exceeds half
    of the maximum code value (``> 127`` for 8-bit files).
    """
    raw = _read_raw(path)
    half = np.iinfo(raw.dtype).max // 2
    bits = raw > half
    if bits.ndim == 3:
        bits = bits.any(axis=2)
    return BinaryMask(bits)


def _to_uint8(samples: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(samples * 255.0), 0, 255).astype(np.uint8)


def save_image(img: Union[RasterImage, BinaryMask], path: str) -> None:
    """
    Write a raster or mask as an 8-bit PNG (or PPM when the path says so).

    Masks are written as single-channel {0, 255}; Gray rasters as single
    channel; RGB rasters as three channels.

    Args:
        img: The raster or mask to write.
        path: Destination path. Parent directories are created.

    Raises:
        ArgumentError: If a Lab raster is given.
        ImageIOError: If the file cannot be written.
    """
    if isinstance(img, BinaryMask):
        out = np.where(img.bits, 255, 0).astype(np.uint8)
    elif img.space == ColorSpace.LAB:
        raise ArgumentError(message="Lab rasters cannot be written; convert to RGB first")
    elif img.channels == 1:
        out = _to_uint8(img.data[:, :, 0])
    else:
        out = cv2.cvtColor(_to_uint8(img.data), cv2.COLOR_RGB2BGR)

    parent = os.path.dirname(os.path.abspath(path))
    try:
        os.makedirs(parent, exist_ok=True)
        ok = cv2.imwrite(path, out)
    except (OSError, cv2.error) as e:
        raise ImageIOError(message=f"Cannot write image: {e}", code="write", path=path) from e
    if not ok:
        raise ImageIOError(message="Cannot write image", code="write", path=path)


def save_interest_map(values: np.ndarray, path: str) -> None:
    """Write a float map losslessly as ``.npy``."""
    try:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        np.save(path, np.asarray(values, dtype=np.float64), allow_pickle=False)
    except OSError as e:
        raise ImageIOError(message=f"Cannot write map: {e}", code="write", path=path) from e


def load_interest_map(path: str) -> np.ndarray:
    """Read a map written by :func:`save_interest_map`."""
    if not os.path.isfile(path):
        raise ImageIOError(message="Map file not found", code="not_found", path=path)
    try:
        values = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as e:
        raise ImageFormatError(message=f"Cannot decode map: {e}", code="format", path=path) from e
    if values.ndim != 2:
        raise ImageFormatError(message="Map must be 2-D", code="format", path=path)
    return values.astype(np.float64)


def _catmull_rom(t: np.ndarray) -> np.ndarray:
    """Keys cubic convolution kernel with a = -0.5."""
    a = -0.5
    t = np.abs(t)
    t2 = t * t
    t3 = t2 * t
    near = (a + 2.0) * t3 - (a + 3.0) * t2 + 1.0
    far = a * t3 - 5.0 * a * t2 + 8.0 * a * t - 4.0 * a
    return np.where(t <= 1.0, near, np.where(t < 2.0, far, 0.0))


def _resample_weights(in_size: int, out_size: int) -> np.ndarray:
    """
    Build the (out_size, in_size) interpolation matrix for one axis.

    Sample centres are aligned (half-pixel convention), edges are clamped and
    when shrinking the kernel is stretched by 1/scale so it also low-passes.
    Each row is normalised to sum to one.
    """
    scale = out_size / in_size
    stretch = min(scale, 1.0)
    support = 2.0 / stretch

    centres = (np.arange(out_size) + 0.5) / scale - 0.5
    left = np.floor(centres - support).astype(int) + 1
    taps = int(np.ceil(2.0 * support)) + 1
    idx = left[:, np.newaxis] + np.arange(taps)[np.newaxis, :]
    w = stretch * _catmull_rom((centres[:, np.newaxis] - idx) * stretch)
    w /= w.sum(axis=1, keepdims=True)

    matrix = np.zeros((out_size, in_size))
    clamped = np.clip(idx, 0, in_size - 1)
    rows = np.repeat(np.arange(out_size), taps)
    np.add.at(matrix, (rows, clamped.ravel()), w.ravel())
    return matrix


def working_shape(height: int, width: int, target: int = WORKING_SIZE) -> Tuple[int, int]:
    """Return the (height, width) after scaling the larger side to ``target``."""
    factor = target / max(height, width)
    return max(1, int(round(height * factor))), max(1, int(round(width * factor)))


def resize_for_processing(img: RasterImage, target: int = WORKING_SIZE) -> RasterImage:
    """
    Resize so that the larger side equals ``target`` pixels.

    Uses separable bicubic (Catmull-Rom) interpolation with edge clamping;
    the result is clamped to [0, 1].

    Args:
        img: The raster to resize.
        target: Size of the larger side after resizing.

    Returns:
        The resized raster, in the same color space.

    Raises:
        ArgumentError: If either side is smaller than 8 pixels.
    """
    if img.width < 8 or img.height < 8:
        raise ArgumentError(message=f"Image too small to resize: {img.width}x{img.height}")

    out_h, out_w = working_shape(img.height, img.width, target)
    if (out_h, out_w) == img.shape:
        return img

    wy = _resample_weights(img.height, out_h)
    wx = _resample_weights(img.width, out_w)
    data = np.einsum("ij,jkc,lk->ilc", wy, img.data, wx, optimize=True)
    if img.space != ColorSpace.LAB:
        data = np.clip(data, 0.0, 1.0)
    logger.debug("Resized %dx%d -> %dx%d", img.width, img.height, out_w, out_h)
    return RasterImage(data, img.space)


def resize_mask(mask: BinaryMask, shape: Tuple[int, int]) -> BinaryMask:
    """Nearest-neighbour resize of a mask to (height, width)."""
    if mask.shape == tuple(shape):
        return mask
    out = cv2.resize(
        mask.bits.astype(np.uint8), (shape[1], shape[0]), interpolation=cv2.INTER_NEAREST
    )
    return BinaryMask(out > 0)


def rgb_to_lab(img: RasterImage) -> RasterImage:
    """
    Convert an RGB raster to CIELAB (sRGB companding, D65 white).

    Raises:
        ArgumentError: If the raster is not RGB.
    """
    if img.space != ColorSpace.RGB:
        raise ArgumentError(message=f"rgb_to_lab needs an RGB raster, got {img.space.value}")
    return RasterImage(color.rgb2lab(img.data, illuminant="D65"), ColorSpace.LAB)


def lab_to_rgb(img: RasterImage) -> RasterImage:
    """Inverse of :func:`rgb_to_lab`; samples are clipped to [0, 1]."""
    if img.space != ColorSpace.LAB:
        raise ArgumentError(message=f"lab_to_rgb needs a Lab raster, got {img.space.value}")
    return RasterImage(np.clip(color.lab2rgb(img.data, illuminant="D65"), 0.0, 1.0), ColorSpace.RGB)


def channel(img: RasterImage, idx: int) -> RasterImage:
    """
    Extract one plane as a single-channel raster.

    RGB and Gray planes come back tagged Gray; Lab planes stay tagged Lab.

    Raises:
        ArgumentError: If ``idx`` is out of range.
    """
    if not 0 <= idx < img.channels:
        raise ArgumentError(message=f"Channel index {idx} out of range for {img.channels} channels")
    space = ColorSpace.LAB if img.space == ColorSpace.LAB else ColorSpace.GRAY
    return RasterImage(img.data[:, :, idx : idx + 1].copy(), space)


def field_of_view(img: RasterImage, threshold: float = 0.02) -> BinaryMask:
    """Camera field of view: pixels where any channel exceeds ``threshold``."""
    return BinaryMask((img.data > threshold).any(axis=2))
