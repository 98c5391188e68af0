"""
Exception classes for retinakit.

This module defines the exception hierarchy used throughout the package. Every
class carries the process exit code the command-line front end reports for it.
"""

from typing import Optional


class RetinaKitError(Exception):
    """Base exception for all retinakit errors."""

    exit_code = 3

    def __init__(
        self,
        message: Optional[str] = None,
        code: Optional[str] = None,
        path: Optional[str] = None,
    ):
        """
        Initialize a new RetinaKitError.

        Args:
            message: A human-readable message describing the error.
            code: A short machine-readable error code.
            path: The file the error relates to, if any.
        """
        super().__init__(message)
        self.message = message
        self.code = code
        self.path = path

    def __str__(self) -> str:
        """Return a string representation of the error."""
        code_string = f", code={self.code}" if self.code else ""
        path_string = f", path={self.path}" if self.path else ""
        return f"{self.message}{code_string}{path_string}"


class ArgumentError(RetinaKitError, ValueError):
    """Raised when an operation receives an invalid argument."""

    exit_code = 1


class ConfigError(RetinaKitError):
    """Raised when a configuration document fails validation."""

    exit_code = 1


class ImageIOError(RetinaKitError, OSError):
    """Raised when an image or mask cannot be read or written."""

    exit_code = 2


class ImageFormatError(RetinaKitError):
    """Raised when a file is not a supported raster format."""

    exit_code = 2


class ModelFormatError(RetinaKitError):
    """Raised when a model file is corrupt or has an unsupported version."""

    exit_code = 2


class ManifestError(RetinaKitError):
    """Raised when a dataset manifest cannot be parsed."""

    exit_code = 2


class PipelineError(RetinaKitError):
    """Raised when a processing stage fails."""

    exit_code = 3

    def __init__(
        self,
        message: Optional[str] = None,
        stage: Optional[str] = None,
        code: Optional[str] = None,
        path: Optional[str] = None,
    ):
        super().__init__(message=message, code=code, path=path)
        self.stage = stage

    def __str__(self) -> str:
        stage_string = f"[{self.stage}] " if self.stage else ""
        return f"{stage_string}{super().__str__()}"
