"""
Dataset manifest entries.
"""

from typing import Optional, Tuple

from pydantic import BaseModel, ConfigDict


class ManifestEntry(BaseModel):
    """
    One image of a dataset with its annotation masks.

    Paths are resolved relative to the manifest file by the loader.
    """

    image: str
    exudate_mask: str
    hard_mask: Optional[str] = None
    soft_mask: Optional[str] = None
    fovea: Optional[Tuple[float, float]] = None
    optic_disc: Optional[Tuple[float, float]] = None

    model_config = ConfigDict(extra="forbid")

    @property
    def has_landmarks(self) -> bool:
        return self.fovea is not None and self.optic_disc is not None
