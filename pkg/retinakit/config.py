"""
Configuration for the retinakit pipeline.

This module provides the parameter blocks of every processing stage and the
aggregate :class:`PipelineConfig`, loadable from a JSON file and overridable
with dotted keys (``binarize.c=0.3``).
"""

import hashlib
import json
import math
import os
from typing import Any, Dict, Mapping, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from retinakit.exceptions import ConfigError


class _Section(BaseModel):
    """Base class for configuration sections: immutable, unknown keys rejected."""

    model_config = ConfigDict(extra="forbid", frozen=True)


class DiffusionParams(_Section):
    """Anisotropic diffusion parameters (conductance constant, exponent, schedule)."""

    K: float = Field(0.1, gt=0)
    alpha: float = Field(1.0, gt=0)
    iterations: int = Field(10, ge=0)
    dt: float = Field(0.15, gt=0, le=0.25)


class ScaleSpaceParams(_Section):
    """Scale ladder of the interest map: sigma_i = base_sigma * k**i."""

    num_scales: int = Field(10, ge=1)
    base_sigma: float = Field(math.sqrt(2.0), gt=0)
    k: float = Field(math.sqrt(2.0), gt=1)
    normalize: bool = True


class MorphologyParams(_Section):
    """Structuring-element sizes, in working-resolution pixels."""

    enhance_disk_radii: Tuple[int, ...] = (2, 3)
    vessel_se_side: int = Field(5, ge=1)

    @field_validator("enhance_disk_radii")
    @classmethod
    def radii_positive(cls, v: Tuple[int, ...]) -> Tuple[int, ...]:
        """Require at least one non-negative radius."""
        if not v or any(r < 0 for r in v):
            raise ValueError("enhance_disk_radii must hold at least one radius >= 0")
        return v

    @field_validator("vessel_se_side")
    @classmethod
    def side_odd(cls, v: int) -> int:
        """Square elements are centred, so the side must be odd."""
        if v % 2 == 0:
            raise ValueError("vessel_se_side must be odd")
        return v


class SauvolaParams(_Section):
    """Sauvola local threshold: window side and sensitivity c."""

    window: int = Field(9, ge=3)
    c: float = Field(0.35, ge=0.2, le=0.5)

    @field_validator("window")
    @classmethod
    def window_odd(cls, v: int) -> int:
        """The window is centred on the pixel."""
        if v % 2 == 0:
            raise ValueError("window must be odd")
        return v


class BinarizeParams(SauvolaParams):
    """Sauvola parameters plus the absolute response floor of the detector."""

    min_response: float = Field(0.06, ge=0)

    def sauvola(self) -> SauvolaParams:
        """Return the pure Sauvola part of this section."""
        return SauvolaParams(window=self.window, c=self.c)


class RegionParams(_Section):
    """Geometric and photometric gates applied to candidate regions."""

    min_solidity: float = Field(0.2, ge=0, le=1)
    max_circularity: float = Field(0.95, gt=0)
    # traced-contour circularity exceeds 1 for blobs under ~10 px radius
    flare_min_area: int = Field(150, ge=0)
    min_area: int = Field(4, ge=1)
    max_area: float = Field(0.02, gt=0, le=1)
    min_minor_axis: float = Field(2.0, ge=0)
    brightness_prefilter: bool = True


class RefineParams(_Section):
    """Luminance refinement of candidates against a top-hat background."""

    enabled: bool = True
    background_side: int = Field(31, ge=3)
    relative_level: float = Field(0.5, gt=0, lt=1)
    min_peak_contrast: float = Field(0.05, ge=0)
    grow: int = Field(1, ge=0)

    @field_validator("background_side")
    @classmethod
    def side_odd(cls, v: int) -> int:
        if v % 2 == 0:
            raise ValueError("background_side must be odd")
        return v


class ClassifierParams(_Section):
    """Kernel SVM hyperparameters, feature options and the search grid."""

    C: float = Field(10.0, gt=0)
    gamma: float = Field(0.0625, gt=0)
    tol: float = Field(1e-3, gt=0)
    max_iter: int = Field(100_000, ge=1)
    contrast_ring: int = Field(3, ge=1)
    folds: int = Field(10, ge=2)
    grid_C: Tuple[float, ...] = (0.1, 1.0, 10.0, 100.0, 1000.0)
    grid_gamma: Tuple[float, ...] = tuple(2.0**e for e in range(-6, 3))


class SeverityParams(_Section):
    """Concentric-band grading geometry and region-score weights."""

    fovea_step: float = Field(80.0, gt=0)
    optic_disc_step: float = Field(55.0, gt=0)
    reference_width: float = Field(1500.0, gt=0)
    levels: int = Field(4, ge=1, le=4)
    load_fraction: float = Field(1.0 / 16.0, gt=0, le=1)
    c1: float = Field(0.5, ge=0, le=1)
    c2: float = Field(0.5, ge=0, le=1)


class EvalParams(_Section):
    """Pixel-level evaluation options."""

    fov_only: bool = True
    fov_threshold: float = Field(0.02, ge=0, lt=1)
    sweep_steps: int = Field(31, ge=2)
    sweep_c_min: float = Field(0.2, ge=0.2, le=0.5)
    sweep_c_max: float = Field(0.5, ge=0.2, le=0.5)
    overlays: bool = False


class PipelineConfig(_Section):
    """Aggregate configuration of every stage."""

    working_size: int = Field(400, ge=8)
    diffusion: DiffusionParams = DiffusionParams()
    scalespace: ScaleSpaceParams = ScaleSpaceParams()
    morphology: MorphologyParams = MorphologyParams()
    binarize: BinarizeParams = BinarizeParams()
    regions: RegionParams = RegionParams()
    refine: RefineParams = RefineParams()
    classifier: ClassifierParams = ClassifierParams()
    severity: SeverityParams = SeverityParams()
    eval: EvalParams = EvalParams()


def _validate(data: Mapping[str, Any], source: Optional[str] = None) -> PipelineConfig:
    try:
        return PipelineConfig.model_validate(dict(data))
    except ValidationError as e:
        raise ConfigError(
            message=f"Invalid configuration: {e}", code="config_invalid", path=source
        ) from e


def load_config(path: Optional[str] = None) -> PipelineConfig:
    """
    Load a pipeline configuration from a JSON file.

    Args:
        path: Path to the JSON file. When None, the defaults are returned.

    Returns:
        The validated configuration.

    Raises:
        ConfigError: If the file is missing, not JSON, or fails validation.
    """
    if path is None:
        return PipelineConfig()

    if not os.path.isfile(path):
        raise ConfigError(message="Config file not found", code="config_missing", path=path)

    try:
        with open(path, "r") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(
            message=f"Invalid JSON in config file: {e}", code="config_json", path=path
        ) from e

    if not isinstance(data, dict):
        raise ConfigError(message="Config root must be an object", code="config_invalid", path=path)

    return _validate(data, source=path)


def _parse_value(raw: Any) -> Any:
    if not isinstance(raw, str):
        return raw
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_overrides(config: PipelineConfig, overrides: Mapping[str, Any]) -> PipelineConfig:
    """
    Return a copy of ``config`` with dotted-key overrides applied.

    String values are decoded as JSON literals when possible, so ``"0.3"``
    becomes a float and ``"[2, 4]"`` a list.

    Args:
        config: The base configuration.
        overrides: Mapping such as ``{"binarize.c": "0.3"}``.

    Returns:
        The validated, updated configuration.

    Raises:
        ConfigError: If a key does not exist or a value fails validation.
    """
    data: Dict[str, Any] = config.model_dump()
    for dotted, raw in overrides.items():
        parts = dotted.split(".")
        node = data
        for part in parts[:-1]:
            child = node.get(part)
            if not isinstance(child, dict):
                raise ConfigError(message=f"Unknown config section: {dotted}", code="config_key")
            node = child
        if parts[-1] not in node:
            raise ConfigError(message=f"Unknown config key: {dotted}", code="config_key")
        node[parts[-1]] = _parse_value(raw)
    return _validate(data)


def parse_override_args(pairs: Optional[list]) -> Dict[str, str]:
    """
    Split ``key=value`` strings from the command line into a mapping.

    Raises:
        ConfigError: If an item has no ``=``.
    """
    result: Dict[str, str] = {}
    for item in pairs or []:
        if "=" not in item:
            raise ConfigError(
                message=f"Override must look like key=value: {item}", code="config_key"
            )
        key, value = item.split("=", 1)
        result[key.strip()] = value.strip()
    return result


def config_digest(config: PipelineConfig) -> str:
    """Return a stable SHA-256 hex digest of the configuration."""
    return hashlib.sha256(config.model_dump_json().encode("utf-8")).hexdigest()
