"""
Fixtures for testing retinakit.
"""

import cv2
import numpy as np
import pytest

from retinakit.config import DiffusionParams, PipelineConfig, ScaleSpaceParams
from retinakit.imgio import BinaryMask, ColorSpace, RasterImage
from retinakit.testing.phantom import PhantomSpec, generate_phantom


# Skip slow and integration tests by default
def pytest_addoption(parser):
    """Add command-line options to pytest."""
    parser.addoption(
        "--integration",
        action="store_true",
        default=False,
        help="Run end-to-end tests through the command-line entry point",
    )
    parser.addoption(
        "--runslow",
        action="store_true",
        default=False,
        help="Run full-resolution phantom pipelines and full cross-validation",
    )


def pytest_collection_modifyitems(config, items):
    """Skip tests whose option was not given."""
    gates = {
        "integration": ("--integration", "Need --integration option to run"),
        "slow": ("--runslow", "Need --runslow option to run"),
    }
    for marker, (option, reason) in gates.items():
        if config.getoption(option):
            continue
        skip = pytest.mark.skip(reason=reason)
        for item in items:
            if marker in item.keywords:
                item.add_marker(skip)


def pytest_configure(config):
    """Register the custom markers."""
    config.addinivalue_line("markers", "integration: end-to-end run through the command line")
    config.addinivalue_line("markers", "slow: full-resolution phantom runs")


@pytest.fixture
def rng():
    """Seeded random generator."""
    return np.random.default_rng(1234)


@pytest.fixture
def quick_config():
    """Configuration with a short diffusion and scale ladder, for fast pipeline runs."""
    return PipelineConfig(
        working_size=160,
        diffusion=DiffusionParams(iterations=3),
        scalespace=ScaleSpaceParams(num_scales=4),
    )


@pytest.fixture
def small_spec():
    """Phantom parameters for a small image."""
    return PhantomSpec(
        width=160,
        height=128,
        vessels=2,
        hard_lesions=2,
        soft_lesions=1,
        flares=1,
        margin=15,
        seed=3,
    )


@pytest.fixture
def small_phantom(small_spec):
    """A rendered small phantom."""
    return generate_phantom(small_spec)


@pytest.fixture
def flat_rgb():
    """Create a flat RGB raster of the given size and colour."""

    def _create(height=64, width=64, rgb=(0.6, 0.3, 0.15)):
        data = np.empty((height, width, 3))
        data[:] = rgb
        return RasterImage(data, ColorSpace.RGB)

    return _create


@pytest.fixture
def box_mask():
    """Create a mask with true pixels in the given (r0, c0, r1, c1) boxes."""

    def _create(shape, *boxes):
        bits = np.zeros(shape, dtype=bool)
        for r0, c0, r1, c1 in boxes:
            bits[r0:r1, c0:c1] = True
        return BinaryMask(bits)

    return _create


@pytest.fixture
def write_png(tmp_path):
    """Write a raw sample array with OpenCV and return the path."""

    def _write(name, samples):
        path = str(tmp_path / name)
        assert cv2.imwrite(path, samples)
        return path

    return _write
