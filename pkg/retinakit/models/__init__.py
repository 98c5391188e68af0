"""
Data models for retinakit.

This package contains the pydantic documents exchanged with files: landmarks,
grades, manifest entries, classification records and reports.
"""

from retinakit.models.exudate import CLASS_ORDER, ClassifiedRegion, ExudateClass
from retinakit.models.grades import CenterGrade, SeverityGrade, SeverityLevel
from retinakit.models.landmarks import RetinalLandmarks
from retinakit.models.manifest import ManifestEntry
from retinakit.models.report import (
    ClassAccuracy,
    ConfusionCounts,
    CrossValidationReport,
    EvalReport,
    ImageResult,
    Rates,
    RocCurve,
    RocPoint,
    SvmMachineDocument,
    SvmModelDocument,
    SweepPoint,
)
