"""
Exudate classes and per-region classification records.
"""

from enum import Enum
from typing import Dict, List, Tuple

from pydantic import BaseModel, ConfigDict, Field


class ExudateClass(str, Enum):
    """Candidate region classes."""

    HARD = "hard"
    SOFT = "soft"
    OUTLIER = "outlier"

    @property
    def order(self) -> int:
        """Position in the fixed tie-break order Hard < Soft < Outlier."""
        return CLASS_ORDER.index(self)


CLASS_ORDER: List[ExudateClass] = [ExudateClass.HARD, ExudateClass.SOFT, ExudateClass.OUTLIER]


class ClassifiedRegion(BaseModel):
    """One detected region with its predicted class and features."""

    label: int
    cls: ExudateClass
    votes: Dict[ExudateClass, float]
    area: int = Field(..., ge=1)
    centroid: Tuple[float, float]
    bbox: Tuple[int, int, int, int]
    features: Dict[str, float]

    model_config = ConfigDict(extra="forbid")
