"""
retinakit.

Exudate detection, classification and severity grading for colour retinal
fundus images: anisotropic diffusion, a Gaussian scale-space interest map,
Sauvola binarisation, region filtering, a kernel SVM and concentric-band
grading, with a pixel-level evaluation harness.
"""

__title__ = "retinakit"

from typing import Optional

# Import version
from retinakit.version import VERSION

__version__ = VERSION

# Import core classes
from retinakit.config import PipelineConfig, apply_overrides, load_config
from retinakit.exceptions import (
    ArgumentError,
    ConfigError,
    ImageFormatError,
    ImageIOError,
    ManifestError,
    ModelFormatError,
    PipelineError,
    RetinaKitError,
)
from retinakit.imgio import BinaryMask, ColorSpace, RasterImage, load_image, load_mask, save_image
from retinakit.pipeline import Detection, ExudatePipeline, StageCache

# Set default logging handler to avoid "No handler found" warnings
import logging
from logging import NullHandler

logging.getLogger(__name__).addHandler(NullHandler())


def create_pipeline(config_path: Optional[str] = None) -> ExudatePipeline:
    """
    Create a detection pipeline.

    Args:
        config_path: Optional JSON configuration file.

    Returns:
        A new ExudatePipeline.
    """
    return ExudatePipeline(load_config(config_path))
