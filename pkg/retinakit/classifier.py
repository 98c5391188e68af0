"""
Region features and a multi-class kernel SVM.

Each candidate region is described by a fixed 22-dimensional feature vector
(shape, colour, texture and contrast statistics). Regions are classified as
hard exudate, soft exudate or outlier by one-vs-one RBF support vector
machines trained with sequential minimal optimisation.
"""

import json
import logging
import math
import os
from dataclasses import dataclass, field
from itertools import combinations
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from retinakit.config import ClassifierParams
from retinakit.exceptions import ArgumentError, ImageIOError, ModelFormatError
from retinakit.imgio import BinaryMask, RasterImage
from retinakit.models.exudate import CLASS_ORDER, ExudateClass
from retinakit.models.report import (
    ClassAccuracy,
    CrossValidationReport,
    SvmMachineDocument,
    SvmModelDocument,
)
from retinakit.morphology import Disk
from retinakit.regions import Region, compactness, solidity

logger = logging.getLogger("retinakit.classifier")

MODEL_FORMAT = "retinakit-svm"
MODEL_VERSION = 1

FEATURE_NAMES: List[str] = [
    "area",
    "mean_r",
    "mean_g",
    "mean_b",
    "std_r",
    "std_g",
    "std_b",
    "mean_a",
    "mean_lab_b",
    "std_a",
    "std_lab_b",
    "eccentricity",
    "extent",
    "major_axis",
    "minor_axis",
    "convexity",
    "edge_gradient",
    "compactness",
    "energy",
    "contrast_r",
    "contrast_g",
    "contrast_b",
]

Sample = Tuple[np.ndarray, ExudateClass]


def _ring(region: Region, shape: Tuple[int, int], width: int) -> Tuple[np.ndarray, np.ndarray]:
    # dilation ring around the region, clipped to the image
    foot = Disk(width).footprint
    r0, c0, r1, c1 = region.bbox
    y0, x0 = max(r0 - width, 0), max(c0 - width, 0)
    y1, x1 = min(r1 + width, shape[0]), min(c1 + width, shape[1])
    inside = np.zeros((y1 - y0, x1 - x0), dtype=bool)
    inside[region.rows - y0, region.cols - x0] = True

    grown = ndimage.binary_dilation(inside, structure=foot)
    ys, xs = np.nonzero(grown & ~inside)
    return ys + y0, xs + x0


def extract_features(
    r: Region,
    img_rgb: RasterImage,
    img_lab: RasterImage,
    dmap: np.ndarray,
    contrast_ring: int = 3,
) -> np.ndarray:
    """
    Compute the 22 region features, in :data:`FEATURE_NAMES` order.

    Args:
        r: Candidate region.
        img_rgb: Working RGB raster.
        img_lab: The same raster in Lab.
        dmap: Decision map, used for the edge-gradient feature.
        contrast_ring: Width of the ring the colour contrast is measured against.

    Returns:
        A float64 vector of length 22.

    Raises:
        ArgumentError: If the region is empty or falls outside the image.
    """
    if r.area < 1 or r.rows.size == 0:
        raise ArgumentError(message="Cannot describe an empty region")
    h, w = img_rgb.shape
    if r.rows.max() >= h or r.cols.max() >= w or r.rows.min() < 0 or r.cols.min() < 0:
        raise ArgumentError(message=f"Region {r.label} lies outside the {h}x{w} image")

    rgb = img_rgb.data[r.rows, r.cols]
    ab = img_lab.data[r.rows, r.cols, 1:3]

    ring_y, ring_x = _ring(r, (h, w), contrast_ring)
    if ring_y.size:
        ring_mean = img_rgb.data[ring_y, ring_x].mean(axis=0)
    else:
        ring_mean = rgb.mean(axis=0)

    compact = compactness(r) if r.perimeter > 0 else 0.0
    green = rgb[:, 1]

    features = np.concatenate(
        [
            [float(r.area)],
            rgb.mean(axis=0),
            rgb.std(axis=0),
            ab.mean(axis=0),
            ab.std(axis=0),
            [r.eccentricity, r.extent, r.major_axis, r.minor_axis, solidity(r)],
            [r.mean_edge_gradient(dmap), compact, float(np.mean(green * green))],
            rgb.mean(axis=0) - ring_mean,
        ]
    )
    return features.astype(np.float64)


def feature_matrix(
    regions: Sequence[Region],
    img_rgb: RasterImage,
    img_lab: RasterImage,
    dmap: np.ndarray,
    contrast_ring: int = 3,
) -> np.ndarray:
    """Stack the feature vectors of many regions into an (n, 22) matrix."""
    if not regions:
        return np.zeros((0, len(FEATURE_NAMES)))
    return np.vstack([extract_features(r, img_rgb, img_lab, dmap, contrast_ring) for r in regions])


def label_regions(
    regions: Sequence[Region],
    exudate: BinaryMask,
    hard: Optional[BinaryMask] = None,
    soft: Optional[BinaryMask] = None,
) -> List[Optional[ExudateClass]]:
    """
    Assign a training class to each region from annotation masks.

    A region is Hard (Soft) when more than half of its pixels lie in the hard
    (soft) mask, and Outlier when at most half lie in the exudate mask. Regions
    that are mostly exudate but carry no type annotation get None and are
    left out of training.
    """
    labels: List[Optional[ExudateClass]] = []
    for r in regions:
        half = r.area / 2.0
        if hard is not None and hard.bits[r.rows, r.cols].sum() > half:
            labels.append(ExudateClass.HARD)
        elif soft is not None and soft.bits[r.rows, r.cols].sum() > half:
            labels.append(ExudateClass.SOFT)
        elif exudate.bits[r.rows, r.cols].sum() > half:
            labels.append(None)
        else:
            labels.append(ExudateClass.OUTLIER)
    return labels


def rbf_kernel(a: np.ndarray, b: np.ndarray, gamma: float) -> np.ndarray:
    """exp(-gamma * |a_i - b_j|^2) for every row pair."""
    sq = (a * a).sum(axis=1)[:, None] + (b * b).sum(axis=1)[None, :] - 2.0 * a @ b.T
    return np.exp(-gamma * np.maximum(sq, 0.0))


@dataclass
class BinarySVM:
    """
    One two-class machine; ``decision(x) > 0`` votes for ``positive``.

    ``dual_coef`` holds alpha_i * y_i of each support vector.
    """

    positive: ExudateClass
    negative: ExudateClass
    support_vectors: np.ndarray
    dual_coef: np.ndarray
    rho: float
    gamma: float

    def decision(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        if self.support_vectors.shape[0] == 0:
            return np.full(x.shape[0], -self.rho)
        return rbf_kernel(x, self.support_vectors, self.gamma) @ self.dual_coef - self.rho


def _bias(y: np.ndarray, grad: np.ndarray, alpha: np.ndarray, C: float) -> float:
    yg = y * grad
    upper = alpha >= C
    lower = alpha <= 0
    free = ~(upper | lower)
    if free.any():
        return float(yg[free].mean())
    # no free vectors: midpoint of the feasible interval
    ub_mask = (upper & (y < 0)) | (lower & (y > 0))
    lb_mask = (upper & (y > 0)) | (lower & (y < 0))
    ub = float(yg[ub_mask].min()) if ub_mask.any() else math.inf
    lb = float(yg[lb_mask].max()) if lb_mask.any() else -math.inf
    if math.isinf(ub) or math.isinf(lb):
        return float(yg.mean())
    return 0.5 * (ub + lb)


def _snap(value: float, C: float) -> float:
    if value < 1e-12 * C:
        return 0.0
    if value > C * (1.0 - 1e-12):
        return C
    return value


def smo(
    K: np.ndarray, y: np.ndarray, C: float, tol: float = 1e-3, max_iter: int = 100_000
) -> Tuple[np.ndarray, float]:
    """
    Solve the SVM dual on a precomputed kernel matrix.

    Minimises 1/2 a'Qa - e'a subject to 0 <= a <= C and y'a = 0, with
    Q_ij = y_i y_j K_ij, using maximal-violating-pair selection for the first
    index and second-order gain for the second.

    Args:
        K: (n, n) kernel matrix.
        y: Labels in {-1, +1}.
        C: Box constraint.
        tol: Stopping tolerance on the KKT gap.
        max_iter: Iteration cap.

    Returns:
        ``(alpha, rho)``; the decision function is sum_i alpha_i y_i K(x_i, x) - rho.
    """
    n = y.size
    alpha = np.zeros(n)
    grad = -np.ones(n)
    diag = np.diag(K)

    for it in range(max_iter):
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        if not up.any() or not low.any():
            break
        score = -y * grad
        i = int(np.argmax(np.where(up, score, -np.inf)))
        g_max = score[i]
        g_min = float(np.min(np.where(low, score, np.inf)))
        if g_max - g_min < tol:
            break

        b = g_max - score
        a = diag[i] + diag - 2.0 * K[i]
        a = np.where(a > 0, a, 1e-12)
        candidates = low & (b > 0)
        j = int(np.argmin(np.where(candidates, -(b * b) / a, np.inf)))

        old_i, old_j = alpha[i], alpha[j]
        step = b[j] / a[j]
        new_i = old_i + y[i] * step

        s = y[i] * y[j]
        d = y[j] * (y[i] * old_i + y[j] * old_j)
        if s > 0:
            lo, hi = max(0.0, d - C), min(C, d)
        else:
            lo, hi = max(0.0, -d), min(C, C - d)
        new_i = _snap(min(max(new_i, lo), hi), C)
        new_j = _snap(d - s * new_i, C)

        alpha[i], alpha[j] = new_i, new_j
        grad += y * (y[i] * K[:, i] * (new_i - old_i) + y[j] * K[:, j] * (new_j - old_j))
    else:
        logger.warning(
            "SMO stopped at the iteration cap (%d) before reaching tol=%g", max_iter, tol
        )

    alpha = np.clip(alpha, 0.0, C)
    return alpha, _bias(y, grad, alpha, C)


def train_binary(
    X: np.ndarray,
    y: np.ndarray,
    positive: ExudateClass,
    negative: ExudateClass,
    C: float,
    gamma: float,
    tol: float = 1e-3,
    max_iter: int = 100_000,
) -> BinarySVM:
    """Train one machine on z-scored features; ``y`` is +1 for ``positive``."""
    K = rbf_kernel(X, X, gamma)
    alpha, rho = smo(K, y.astype(np.float64), C, tol, max_iter)
    sv = alpha > 0
    return BinarySVM(
        positive=positive,
        negative=negative,
        support_vectors=X[sv].copy(),
        dual_coef=(alpha * y)[sv],
        rho=rho,
        gamma=gamma,
    )


@dataclass
class SvmModel:
    """Trained one-vs-one classifier with its feature normalisation."""

    classes: List[ExudateClass]
    mean: np.ndarray
    std: np.ndarray
    machines: List[BinarySVM]
    C: float
    gamma: float
    seed: int = 0
    feature_names: List[str] = field(default_factory=lambda: list(FEATURE_NAMES))

    def normalize(self, x: np.ndarray) -> np.ndarray:
        return (np.atleast_2d(x) - self.mean) / self.std

    def decision_values(self, fv: np.ndarray) -> Dict[Tuple[ExudateClass, ExudateClass], float]:
        """Decision value of every pairwise machine for one feature vector."""
        z = self.normalize(_check_finite(fv))
        return {(m.positive, m.negative): float(m.decision(z)[0]) for m in self.machines}


def _check_finite(x: np.ndarray) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ArgumentError(message="Feature values must be finite")
    return arr


def _stack(samples: Sequence[Sample]) -> Tuple[np.ndarray, List[ExudateClass]]:
    if not samples:
        raise ArgumentError(message="No training samples")
    X = _check_finite(np.vstack([np.asarray(fv, dtype=np.float64) for fv, _ in samples]))
    labels = [ExudateClass(c) for _, c in samples]
    return X, labels


def zscore_stats(X: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Per-feature mean and std; a zero std becomes 1."""
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std[std == 0] = 1.0
    return mean, std


def train(samples: Sequence[Sample], hp: ClassifierParams, seed: int = 0) -> SvmModel:
    """
    Train the one-vs-one classifier.

    Args:
        samples: (feature vector, class) pairs.
        hp: Hyperparameters (C, gamma, tol, max_iter).
        seed: Recorded with the model; the solver itself is deterministic.

    Returns:
        The trained model.

    Raises:
        ArgumentError: With fewer than two classes or non-finite features.
    """
    X, labels = _stack(samples)
    classes = [c for c in CLASS_ORDER if c in labels]
    if len(classes) < 2:
        raise ArgumentError(
            message=f"Training needs at least two classes, got {[c.value for c in classes]}"
        )

    mean, std = zscore_stats(X)
    Z = (X - mean) / std
    label_arr = np.array([c.value for c in labels])

    machines = []
    for pos, neg in combinations(classes, 2):
        idx = np.nonzero((label_arr == pos.value) | (label_arr == neg.value))[0]
        y = np.where(label_arr[idx] == pos.value, 1.0, -1.0)
        machine = train_binary(Z[idx], y, pos, neg, hp.C, hp.gamma, hp.tol, hp.max_iter)
        logger.debug(
            "trained %s/%s: %d samples, %d support vectors",
            pos.value,
            neg.value,
            idx.size,
            machine.dual_coef.size,
        )
        machines.append(machine)

    return SvmModel(
        classes=classes,
        mean=mean,
        std=std,
        machines=machines,
        C=hp.C,
        gamma=hp.gamma,
        seed=seed,
    )


def predict(model: SvmModel, fv: np.ndarray) -> Tuple[ExudateClass, Dict[ExudateClass, float]]:
    """
    Classify one feature vector by majority vote of the pairwise machines.

    Ties are broken by the summed absolute decision margins of the votes,
    then by the class order Hard < Soft < Outlier.

    Returns:
        ``(class, votes per class)``.

    Raises:
        ArgumentError: If the vector has non-finite entries.
    """
    values = model.decision_values(fv)
    votes = {c: 0.0 for c in model.classes}
    margins = {c: 0.0 for c in model.classes}
    for (pos, neg), f in values.items():
        winner = pos if f > 0 else neg
        votes[winner] += 1.0
        margins[winner] += abs(f)
    best = min(model.classes, key=lambda c: (-votes[c], -margins[c], c.order))
    return best, votes


def predict_many(model: SvmModel, X: np.ndarray) -> List[ExudateClass]:
    return [predict(model, row)[0] for row in np.atleast_2d(X)]


def stratified_folds(labels: Sequence[ExudateClass], folds: int, seed: int) -> List[np.ndarray]:
    """
    Split sample indices into stratified folds.

    Each class is shuffled and dealt round-robin; the dealing position carries
    over between classes so fold sizes differ by at most one.

    Raises:
        ArgumentError: If any class has fewer samples than folds.
    """
    rng = np.random.default_rng(seed)
    label_arr = np.array([ExudateClass(c).value for c in labels])
    buckets: List[List[int]] = [[] for _ in range(folds)]
    offset = 0
    for cls in CLASS_ORDER:
        idx = np.nonzero(label_arr == cls.value)[0]
        if idx.size == 0:
            continue
        if idx.size < folds:
            raise ArgumentError(
                message=f"Class {cls.value} has {idx.size} samples, fewer than {folds} folds"
            )
        for k, sample in enumerate(rng.permutation(idx)):
            buckets[(offset + k) % folds].append(int(sample))
        offset = (offset + idx.size) % folds
    return [np.array(sorted(b), dtype=int) for b in buckets]


def cross_validate(
    samples: Sequence[Sample], hp: ClassifierParams, folds: int = 10, seed: int = 0
) -> CrossValidationReport:
    """
    Stratified k-fold cross-validation.

    Returns:
        Per-fold accuracy and per-class recall mean/std across folds.
    """
    X, labels = _stack(samples)
    parts = stratified_folds(labels, folds, seed)
    label_arr = np.array([c.value for c in labels])
    present = [c for c in CLASS_ORDER if c in labels]

    fold_acc: List[float] = []
    per_class: Dict[ExudateClass, List[float]] = {c: [] for c in present}
    for k, test_idx in enumerate(parts):
        train_idx = np.setdiff1d(np.arange(len(labels)), test_idx)
        model = train([(X[i], labels[i]) for i in train_idx], hp, seed)
        predicted = np.array([c.value for c in predict_many(model, X[test_idx])])
        truth = label_arr[test_idx]
        fold_acc.append(float(np.mean(predicted == truth)))
        for c in present:
            sel = truth == c.value
            if sel.any():
                per_class[c].append(float(np.mean(predicted[sel] == c.value)))
        logger.debug("fold %d/%d: accuracy %.4f", k + 1, folds, fold_acc[-1])

    return CrossValidationReport(
        C=hp.C,
        gamma=hp.gamma,
        folds=folds,
        fold_accuracy=fold_acc,
        accuracy_mean=float(np.mean(fold_acc)),
        accuracy_std=float(np.std(fold_acc)),
        per_class={
            c: ClassAccuracy(mean=float(np.mean(v)), std=float(np.std(v)))
            for c, v in per_class.items()
            if v
        },
    )


def grid_search(
    samples: Sequence[Sample], hp: ClassifierParams, folds: Optional[int] = None, seed: int = 0
) -> Tuple[ClassifierParams, List[CrossValidationReport]]:
    """
    Cross-validate every (C, gamma) pair of ``hp.grid_C`` x ``hp.grid_gamma``.

    Returns:
        The parameters with the best mean accuracy (first in grid order on
        ties) and the report of every pair.
    """
    k = folds or hp.folds
    reports = []
    best: Optional[CrossValidationReport] = None
    for C in hp.grid_C:
        for gamma in hp.grid_gamma:
            trial = hp.model_copy(update={"C": C, "gamma": gamma})
            report = cross_validate(samples, trial, k, seed)
            reports.append(report)
            logger.info("grid C=%g gamma=%g: accuracy %.4f", C, gamma, report.accuracy_mean)
            if best is None or report.accuracy_mean > best.accuracy_mean:
                best = report
    if best is None:
        raise ArgumentError(message="Empty hyperparameter grid")
    return hp.model_copy(update={"C": best.C, "gamma": best.gamma}), reports


def model_to_document(model: SvmModel) -> SvmModelDocument:
    return SvmModelDocument(
        format=MODEL_FORMAT,
        version=MODEL_VERSION,
        C=model.C,
        gamma=model.gamma,
        seed=model.seed,
        classes=model.classes,
        feature_names=model.feature_names,
        mean=model.mean.tolist(),
        std=model.std.tolist(),
        machines=[
            SvmMachineDocument(
                positive=m.positive,
                negative=m.negative,
                support_vectors=m.support_vectors.tolist(),
                dual_coef=m.dual_coef.tolist(),
                rho=m.rho,
            )
            for m in model.machines
        ],
    )


def save_model(model: SvmModel, path: str) -> None:
    """
    Write a model as versioned JSON.

    Raises:
        ImageIOError: If the file cannot be written.
    """
    text = json.dumps(model_to_document(model).model_dump(mode="json"), sort_keys=True)
    try:
        parent = os.path.dirname(path)
        if parent:
            os.makedirs(parent, exist_ok=True)
        with open(path, "w") as f:
            f.write(text)
    except OSError as e:
        raise ImageIOError(
            message=f"Cannot write model: {e}", code="write_failed", path=path
        ) from e


def load_model(path: str) -> SvmModel:
    """
    Read a model written by :func:`save_model`.

    Raises:
        ImageIOError: If the file is missing.
        ModelFormatError: If the file is corrupt or of another format version.
    """
    if not os.path.isfile(path):
        raise ImageIOError(message="Model file not found", code="not_found", path=path)
    try:
        with open(path, "r") as f:
            raw = json.load(f)
        doc = SvmModelDocument.model_validate(raw)
    except ValueError as e:
        raise ModelFormatError(
            message=f"Corrupt model file: {e}", code="model_corrupt", path=path
        ) from e

    if doc.format != MODEL_FORMAT or doc.version != MODEL_VERSION:
        raise ModelFormatError(
            message=f"Unsupported model {doc.format} v{doc.version}",
            code="model_version",
            path=path,
        )

    dims = len(doc.mean)
    if len(doc.std) != dims or any(s <= 0 for s in doc.std):
        raise ModelFormatError(
            message="Inconsistent feature normalisation", code="model_corrupt", path=path
        )

    machines = []
    for m in doc.machines:
        sv = np.array(m.support_vectors, dtype=np.float64).reshape(-1, dims)
        coef = np.array(m.dual_coef, dtype=np.float64)
        if sv.shape[0] != coef.size:
            raise ModelFormatError(
                message="Support vector count mismatch", code="model_corrupt", path=path
            )
        machines.append(BinarySVM(m.positive, m.negative, sv, coef, m.rho, doc.gamma))

    return SvmModel(
        classes=list(doc.classes),
        mean=np.array(doc.mean, dtype=np.float64),
        std=np.array(doc.std, dtype=np.float64),
        machines=machines,
        C=doc.C,
        gamma=doc.gamma,
        seed=doc.seed,
        feature_names=list(doc.feature_names),
    )
