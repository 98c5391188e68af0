"""
Retinal landmark model.
"""

from typing import Tuple

from pydantic import BaseModel, ConfigDict, Field


class RetinalLandmarks(BaseModel):
    """Fovea and optic disc centres, in pixels of an image of the given size."""

    fovea: Tuple[float, float]
    optic_disc: Tuple[float, float]
    image_width: int = Field(..., ge=1)
    image_height: int = Field(..., ge=1)

    model_config = ConfigDict(extra="forbid", frozen=True)

    def inside(self) -> bool:
        """True when both centres lie within the image bounds."""
        return all(
            0 <= x < self.image_width and 0 <= y < self.image_height
            for x, y in (self.fovea, self.optic_disc)
        )

    def rescaled(self, width: int, height: int) -> "RetinalLandmarks":
        """Map the centres onto an image of another size."""
        sx = width / self.image_width
        sy = height / self.image_height
        return RetinalLandmarks(
            fovea=(self.fovea[0] * sx, self.fovea[1] * sy),
            optic_disc=(self.optic_disc[0] * sx, self.optic_disc[1] * sy),
            image_width=width,
            image_height=height,
        )
