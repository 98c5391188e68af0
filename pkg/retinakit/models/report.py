"""
Evaluation, cross-validation and model-file documents.
"""

from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field

from retinakit.models.exudate import ExudateClass
from retinakit.models.grades import SeverityLevel


class ConfusionCounts(BaseModel):
    """Pixel tallies of a prediction against ground truth."""

    tp: int = Field(0, ge=0)
    fp: int = Field(0, ge=0)
    fn: int = Field(0, ge=0)
    tn: int = Field(0, ge=0)

    model_config = ConfigDict(extra="forbid", frozen=True)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            tp=self.tp + other.tp,
            fp=self.fp + other.fp,
            fn=self.fn + other.fn,
            tn=self.tn + other.tn,
        )


class Rates(BaseModel):
    """Sensitivity, predictive value, specificity and accuracy; None when 0/0."""

    se: Optional[float] = None
    pred: Optional[float] = None
    sp: Optional[float] = None
    ac: Optional[float] = None


class RocPoint(BaseModel):
    """One operating point; the closing corners carry no threshold."""

    threshold: Optional[float] = None
    se: float
    fpr: float
    pred: Optional[float] = None


class RocCurve(BaseModel):
    """Threshold sweep from the strictest to the loosest operating point."""

    points: List[RocPoint]
    auc: float = Field(..., ge=0, le=1)


class SweepPoint(BaseModel):
    """Detection-stage operating point at one Sauvola sensitivity."""

    c: float
    counts: ConfusionCounts
    rates: Rates


class ImageResult(BaseModel):
    """Outcome of one manifest entry; ``error`` is set when it could not be processed."""

    image: str
    counts: Optional[ConfusionCounts] = None
    rates: Optional[Rates] = None
    regions: int = 0
    grade: Optional[SeverityLevel] = None
    overlay: Optional[str] = None
    error: Optional[str] = None


class EvalReport(BaseModel):
    """Per-image results, micro-averaged aggregates and optional curves."""

    images: List[ImageResult]
    totals: ConfusionCounts
    rates: Rates
    mean_rates: Rates
    score_roc: Optional[RocCurve] = None
    sweep: Optional[List[SweepPoint]] = None
    sweep_roc: Optional[RocCurve] = None
    config_digest: Optional[str] = None


class ClassAccuracy(BaseModel):
    mean: float
    std: float


class CrossValidationReport(BaseModel):
    """Stratified k-fold accuracy for one hyperparameter pair."""

    C: float
    gamma: float
    folds: int
    fold_accuracy: List[float]
    accuracy_mean: float
    accuracy_std: float
    per_class: Dict[ExudateClass, ClassAccuracy]


class SvmMachineDocument(BaseModel):
    positive: ExudateClass
    negative: ExudateClass
    support_vectors: List[List[float]]
    dual_coef: List[float]
    rho: float

    model_config = ConfigDict(extra="forbid")


class SvmModelDocument(BaseModel):
    """On-disk layout of a trained classifier."""

    format: str
    version: int
    C: float
    gamma: float
    seed: int
    classes: List[ExudateClass]
    feature_names: List[str]
    mean: List[float]
    std: List[float]
    machines: List[SvmMachineDocument]

    model_config = ConfigDict(extra="forbid")
