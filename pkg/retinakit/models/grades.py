"""
Severity grade models.
"""

from enum import Enum
from typing import Dict, List

from pydantic import BaseModel, ConfigDict


class SeverityLevel(str, Enum):
    """Severity groups, ordered None < Mild < Moderate < Severe < Proliferate."""

    NONE = "none"
    MILD = "mild"
    MODERATE = "moderate"
    SEVERE = "severe"
    PROLIFERATE = "proliferate"

    @property
    def rank(self) -> int:
        return list(SeverityLevel).index(self)


class CenterGrade(BaseModel):
    """Grade of one circle system with its band statistics."""

    center: str
    grade: SeverityLevel
    radii: List[float]
    band_areas: List[int]
    band_counts: List[int]

    model_config = ConfigDict(extra="forbid")


class SeverityGrade(BaseModel):
    """Overall grade: the maximum over the per-centre grades."""

    grade: SeverityLevel
    per_center: Dict[str, CenterGrade]

    model_config = ConfigDict(extra="forbid")
