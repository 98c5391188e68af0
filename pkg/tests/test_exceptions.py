"""
Tests for the exception hierarchy.
"""

import pytest

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


class TestExceptions:
    """Tests for the exception classes."""

    def test_str(self):
        """Test the string form with and without code and path."""
        assert str(RetinaKitError(message="Failed")) == "Failed"
        error = ImageIOError(message="Image file not found", code="not_found", path="a.png")
        assert str(error) == "Image file not found, code=not_found, path=a.png"

    def test_pipeline_error_names_stage(self):
        """Test that the failing stage prefixes the message."""
        error = PipelineError(message="boom", stage="binarize", code="stage_failed")
        assert error.stage == "binarize"
        assert str(error) == "[binarize] boom, code=stage_failed"

    @pytest.mark.parametrize(
        "cls,exit_code",
        [
            (RetinaKitError, 3),
            (ArgumentError, 1),
            (ConfigError, 1),
            (ImageIOError, 2),
            (ImageFormatError, 2),
            (ModelFormatError, 2),
            (ManifestError, 2),
            (PipelineError, 3),
        ],
    )
    def test_exit_codes(self, cls, exit_code):
        """Test the exit code of every class."""
        assert issubclass(cls, RetinaKitError)
        assert cls(message="x").exit_code == exit_code

    def test_builtin_bases(self):
        """Test that argument and I/O errors are also builtin errors."""
        with pytest.raises(ValueError):
            raise ArgumentError(message="bad value")
        with pytest.raises(OSError):
            raise ImageIOError(message="cannot read", path="a.png")
