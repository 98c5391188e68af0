"""
Pixel-level evaluation of the detector.

Provides confusion counts and rates, exact ROC curves with their area, a
detection-stage sweep of the Sauvola sensitivity, dataset manifests, and the
dataset runner that writes JSON/CSV reports and overlay images.
"""

import csv
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import cv2
import numpy as np
from pydantic import ValidationError

from retinakit.classifier import SvmModel
from retinakit.config import EvalParams, PipelineConfig, config_digest
from retinakit.exceptions import ArgumentError, ImageIOError, ManifestError, RetinaKitError
from retinakit.imgio import (
    BinaryMask,
    RasterImage,
    field_of_view,
    load_image,
    load_mask,
    resize_mask,
)
from retinakit.models.exudate import ExudateClass
from retinakit.models.landmarks import RetinalLandmarks
from retinakit.models.manifest import ManifestEntry
from retinakit.models.report import (
    ConfusionCounts,
    EvalReport,
    ImageResult,
    Rates,
    RocCurve,
    RocPoint,
    SweepPoint,
)
from retinakit.pipeline import Detection, ExudatePipeline
from retinakit.regions import regions_to_mask

logger = logging.getLogger("retinakit.eval")

# BGR
OVERLAY_COLORS: Dict[str, Tuple[int, int, int]] = {
    "hard": (0, 255, 255),
    "soft": (255, 255, 0),
    "candidate": (255, 0, 255),
}

CSV_COLUMNS = [
    "image",
    "tp",
    "fp",
    "fn",
    "tn",
    "se",
    "pred",
    "sp",
    "ac",
    "regions",
    "grade",
    "error",
]


def _check_same(a: BinaryMask, b: BinaryMask) -> None:
    if a.shape != b.shape:
        raise ArgumentError(message=f"Mask sizes differ: {a.shape} vs {b.shape}")


def confusion(
    pred: BinaryMask, truth: BinaryMask, fov: Optional[BinaryMask] = None
) -> ConfusionCounts:
    """
    Tally a prediction against ground truth, optionally inside a field of view.

    Raises:
        ArgumentError: If the masks differ in size.
    """
    _check_same(pred, truth)
    p, t = pred.bits, truth.bits
    if fov is not None:
        _check_same(pred, fov)
        p, t = p[fov.bits], t[fov.bits]
    return ConfusionCounts(
        tp=int(np.count_nonzero(p & t)),
        fp=int(np.count_nonzero(p & ~t)),
        fn=int(np.count_nonzero(~p & t)),
        tn=int(np.count_nonzero(~p & ~t)),
    )


def _ratio(num: int, den: int) -> Optional[float]:
    return num / den if den > 0 else None


def rates(c: ConfusionCounts) -> Rates:
    """SE, PRED, SP and AC; a rate with a zero denominator is None."""
    return Rates(
        se=_ratio(c.tp, c.tp + c.fn),
        pred=_ratio(c.tp, c.tp + c.fp),
        sp=_ratio(c.tn, c.tn + c.fp),
        ac=_ratio(c.tp + c.tn, c.total),
    )


def micro_aggregate(counts: Sequence[ConfusionCounts]) -> ConfusionCounts:
    """Sum of per-image counts."""
    total = ConfusionCounts()
    for c in counts:
        total = total + c
    return total


def mean_rates(items: Sequence[Rates]) -> Rates:
    """Per-rate mean over the images where that rate is defined."""
    out = {}
    for name in ("se", "pred", "sp", "ac"):
        values = [getattr(r, name) for r in items if getattr(r, name) is not None]
        out[name] = float(np.mean(values)) if values else None
    return Rates(**out)


def _trapezoid(x: np.ndarray, y: np.ndarray) -> float:
    return float(np.sum(np.diff(x) * (y[1:] + y[:-1]) / 2.0))


def roc_auc(
    scores: np.ndarray,
    truth: BinaryMask,
    fov: Optional[BinaryMask] = None,
    thresholds: Optional[Sequence[float]] = None,
) -> RocCurve:
    """
    ROC curve of a score map against ground truth.

    Without ``thresholds`` every distinct score is an operating point
    (``score >= threshold`` is positive), which makes the trapezoidal area
    equal to the Mann-Whitney statistic with ties counted half. Points run from
    (0, 0) to (1, 1); each also carries the predictive value.

    Raises:
        ArgumentError: If sizes differ or the truth has no positives or no negatives.
    """
    s = np.asarray(scores, dtype=np.float64)
    if s.shape != truth.shape:
        raise ArgumentError(message=f"Score map {s.shape} and truth {truth.shape} differ")
    t = truth.bits
    if fov is not None:
        _check_same(truth, fov)
        s, t = s[fov.bits], t[fov.bits]
    s, t = s.ravel(), t.ravel()
    positives = int(t.sum())
    negatives = int(t.size - positives)
    if positives == 0 or negatives == 0:
        raise ArgumentError(message="ROC needs both positive and negative pixels")

    if thresholds is None:
        order = np.argsort(-s, kind="mergesort")
        s_sorted, t_sorted = s[order], t[order]
        tp_cum = np.cumsum(t_sorted)
        fp_cum = np.cumsum(~t_sorted)
        ends = np.r_[np.nonzero(np.diff(s_sorted))[0], s_sorted.size - 1]
        levels = s_sorted[ends]
        tp, fp = tp_cum[ends], fp_cum[ends]
    else:
        levels = np.sort(np.asarray(thresholds, dtype=np.float64))[::-1]
        tp = np.array([np.count_nonzero(t & (s >= th)) for th in levels])
        fp = np.array([np.count_nonzero(~t & (s >= th)) for th in levels])

    se = np.r_[0.0, tp / positives, 1.0]
    fpr = np.r_[0.0, fp / negatives, 1.0]
    points = [RocPoint(threshold=None, se=0.0, fpr=0.0, pred=None)]
    for th, n_tp, n_fp, y, x in zip(levels, tp, fp, se[1:-1], fpr[1:-1]):
        pred = _ratio(int(n_tp), int(n_tp + n_fp))
        points.append(RocPoint(threshold=float(th), se=float(y), fpr=float(x), pred=pred))
    points.append(RocPoint(threshold=None, se=1.0, fpr=1.0, pred=positives / t.size))
    auc = min(max(_trapezoid(fpr, se), 0.0), 1.0)
    return RocCurve(points=points, auc=auc)


def sweep_sauvola(
    pipeline: ExudatePipeline,
    detection: Detection,
    truth: BinaryMask,
    fov: Optional[BinaryMask] = None,
    params: Optional[EvalParams] = None,
) -> List[SweepPoint]:
    """
    Re-run binarisation and filtering over a range of Sauvola sensitivities.

    The enhanced map of ``detection`` is reused; only the stages after it run
    again for each value of c.
    """
    p = params or pipeline.config.eval
    points = []
    for c in np.linspace(p.sweep_c_min, p.sweep_c_max, p.sweep_steps):
        bparams = pipeline.config.binarize.model_copy(update={"c": float(c)})
        _, _, regions = pipeline.segment(
            detection.working, detection.dmap, detection.enhanced, bparams
        )
        counts = confusion(regions_to_mask(regions, truth.shape), truth, fov)
        points.append(SweepPoint(c=float(c), counts=counts, rates=rates(counts)))
    return points


def sweep_roc(points: Sequence[SweepPoint]) -> RocCurve:
    """ROC curve through sweep operating points, closed at (0, 0) and (1, 1)."""
    pairs = []
    for pt in points:
        r = pt.rates
        if r.se is not None and r.sp is not None:
            pairs.append((1.0 - r.sp, r.se, pt.c, r.pred))
    pairs.sort(key=lambda q: (q[0], q[1]))
    fpr = np.array([0.0] + [q[0] for q in pairs] + [1.0])
    se = np.array([0.0] + [q[1] for q in pairs] + [1.0])
    roc_points = [RocPoint(threshold=q[2], se=q[1], fpr=q[0], pred=q[3]) for q in pairs]
    return RocCurve(points=roc_points, auc=min(max(_trapezoid(fpr, se), 0.0), 1.0))


def load_manifest(path: str) -> List[ManifestEntry]:
    """
    Read a manifest; relative paths are resolved against its directory.

    Raises:
        ManifestError: If the file is missing, not JSON, or has invalid entries.
    """
    if not os.path.isfile(path):
        raise ManifestError(message="Manifest not found", code="not_found", path=path)
    try:
        with open(path, "r") as f:
            raw = json.load(f)
    except json.JSONDecodeError as e:
        raise ManifestError(message=f"Invalid JSON: {e}", code="manifest_json", path=path) from e
    if not isinstance(raw, list):
        raise ManifestError(
            message="Manifest root must be a list", code="manifest_invalid", path=path
        )

    base = os.path.dirname(os.path.abspath(path))
    entries = []
    for idx, item in enumerate(raw):
        try:
            entry = ManifestEntry.model_validate(item)
        except ValidationError as e:
            raise ManifestError(
                message=f"Entry {idx}: {e}", code="manifest_invalid", path=path
            ) from e
        resolved = {
            key: os.path.join(base, value)
            for key in ("image", "exudate_mask", "hard_mask", "soft_mask")
            if (value := getattr(entry, key)) is not None
        }
        entries.append(entry.model_copy(update=resolved))
    return entries


def render_overlay(img: RasterImage, outlines: Dict[str, BinaryMask], path: str) -> str:
    """
    Draw mask outlines over an RGB image and write it as PNG.

    Args:
        img: RGB raster, at the masks' resolution.
        outlines: Masks keyed by ``hard``, ``soft`` or ``candidate``.
        path: Output file.

    Returns:
        The written path.
    """
    canvas = np.ascontiguousarray(np.rint(img.data[:, :, ::-1] * 255.0).astype(np.uint8))
    for kind, mask in outlines.items():
        if mask.count() == 0:
            continue
        contours, _ = cv2.findContours(
            mask.bits.astype(np.uint8), cv2.RETR_EXTERNAL, cv2.CHAIN_APPROX_NONE
        )
        cv2.drawContours(canvas, contours, -1, OVERLAY_COLORS[kind], 1)
    try:
        parent = os.path.dirname(path)
        if parent:
            os.makedirs(parent, exist_ok=True)
        ok = cv2.imwrite(path, canvas)
    except (OSError, cv2.error) as e:
        raise ImageIOError(
            message=f"Cannot write overlay: {e}", code="write_failed", path=path
        ) from e
    if not ok:
        raise ImageIOError(message="Cannot write overlay", code="write_failed", path=path)
    return path


@dataclass
class _EntryOutcome:
    result: ImageResult
    scores: Optional[np.ndarray] = None
    truth: Optional[np.ndarray] = None
    sweep: Optional[List[SweepPoint]] = None


def _classified_outlines(
    pipeline: ExudatePipeline, detection: Detection, model: SvmModel
) -> Dict[str, BinaryMask]:
    shape = detection.working.shape
    hard = np.zeros(shape, dtype=bool)
    soft = np.zeros(shape, dtype=bool)
    for region, record in zip(detection.regions, pipeline.classify(detection, model)):
        if record.cls == ExudateClass.HARD:
            hard[region.rows, region.cols] = True
        elif record.cls == ExudateClass.SOFT:
            soft[region.rows, region.cols] = True
    return {"hard": BinaryMask(hard), "soft": BinaryMask(soft)}


def evaluate_entry(
    pipeline: ExudatePipeline,
    entry: ManifestEntry,
    sweep: bool = False,
    overlay_dir: Optional[str] = None,
    model: Optional[SvmModel] = None,
) -> _EntryOutcome:
    """Run the pipeline on one manifest entry and score it at working resolution."""
    p = pipeline.config.eval
    img = load_image(entry.image)
    truth_full = load_mask(entry.exudate_mask)
    if truth_full.shape != img.shape:
        raise ArgumentError(message="Mask and image sizes differ", path=entry.exudate_mask)

    detection = pipeline.detect(img)
    truth = resize_mask(truth_full, detection.working.shape)
    fov = field_of_view(detection.working, p.fov_threshold) if p.fov_only else None
    counts = confusion(detection.mask, truth, fov)

    grade = None
    if entry.has_landmarks:
        assert entry.fovea is not None and entry.optic_disc is not None
        lm = RetinalLandmarks(
            fovea=entry.fovea,
            optic_disc=entry.optic_disc,
            image_width=img.width,
            image_height=img.height,
        )
        grade = pipeline.grade(detection.full_mask(), lm).grade

    overlay = None
    if overlay_dir is not None:
        if model is not None:
            outlines = _classified_outlines(pipeline, detection, model)
        else:
            outlines = {"candidate": detection.mask}
        stem = os.path.splitext(os.path.basename(entry.image))[0]
        suffix = grade.value if grade is not None else "ungraded"
        overlay = render_overlay(
            detection.working, outlines, os.path.join(overlay_dir, f"{stem}_{suffix}.png")
        )

    scores = detection.dmap[fov.bits] if fov is not None else detection.dmap.ravel()
    labels = truth.bits[fov.bits] if fov is not None else truth.bits.ravel()
    result = ImageResult(
        image=entry.image,
        counts=counts,
        rates=rates(counts),
        regions=len(detection.regions),
        grade=grade,
        overlay=overlay,
    )
    points = sweep_sauvola(pipeline, detection, truth, fov) if sweep else None
    return _EntryOutcome(result=result, scores=scores, truth=labels, sweep=points)


def _safe_entry(args) -> _EntryOutcome:
    pipeline, entry, sweep, overlay_dir, model = args
    try:
        return evaluate_entry(pipeline, entry, sweep, overlay_dir, model)
    except (RetinaKitError, OSError) as e:
        logger.error("evaluation failed for %s: %s", entry.image, e)
        return _EntryOutcome(result=ImageResult(image=entry.image, error=str(e)))


def _merge_sweeps(outcomes: Sequence[_EntryOutcome]) -> Optional[List[SweepPoint]]:
    runs = [o.sweep for o in outcomes if o.sweep]
    if not runs:
        return None
    merged = []
    for k, first in enumerate(runs[0]):
        counts = micro_aggregate([run[k].counts for run in runs])
        merged.append(SweepPoint(c=first.c, counts=counts, rates=rates(counts)))
    return merged


def evaluate_dataset(
    manifest: str,
    config: Optional[PipelineConfig] = None,
    jobs: int = 1,
    sweep: bool = False,
    overlay_dir: Optional[str] = None,
    model: Optional[SvmModel] = None,
    pipeline: Optional[ExudatePipeline] = None,
) -> EvalReport:
    """
    Evaluate the detector on every manifest entry.

    Entries run on a pool of ``jobs`` threads; results are reduced in manifest
    order. An entry that fails is recorded with its error and left out of the
    aggregates.

    Args:
        manifest: Path of the manifest JSON.
        config: Pipeline configuration.
        jobs: Worker threads.
        sweep: Also sweep the Sauvola sensitivity.
        overlay_dir: Where to write overlays (None disables them).
        model: Optional classifier for hard/soft overlay outlines.
        pipeline: Pipeline to use instead of building one from ``config``.

    Returns:
        The evaluation report.

    Raises:
        ManifestError: If the manifest cannot be read.
    """
    pipeline = pipeline or ExudatePipeline(config)
    entries = load_manifest(manifest)
    if overlay_dir is None and pipeline.config.eval.overlays:
        overlay_dir = os.path.join(os.path.dirname(os.path.abspath(manifest)), "overlays")

    work = [(pipeline, e, sweep, overlay_dir, model) for e in entries]
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as executor:
        outcomes = list(executor.map(_safe_entry, work))

    ok = [o for o in outcomes if o.result.error is None]
    totals = micro_aggregate([o.result.counts for o in ok if o.result.counts is not None])

    score_roc = None
    if ok:
        scores = np.concatenate([o.scores for o in ok if o.scores is not None])
        labels = np.concatenate([o.truth for o in ok if o.truth is not None])
        if labels.any() and not labels.all():
            score_roc = roc_auc(scores[None, :], BinaryMask(labels[None, :]))

    sweep_points = _merge_sweeps(ok) if sweep else None
    report = EvalReport(
        images=[o.result for o in outcomes],
        totals=totals,
        rates=rates(totals),
        mean_rates=mean_rates([o.result.rates for o in ok if o.result.rates is not None]),
        score_roc=score_roc,
        sweep=sweep_points,
        sweep_roc=sweep_roc(sweep_points) if sweep_points else None,
        config_digest=config_digest(pipeline.config),
    )
    logger.info(
        "evaluated %d images (%d failed): SE=%s PRED=%s",
        len(outcomes),
        len(outcomes) - len(ok),
        report.rates.se,
        report.rates.pred,
    )
    return report


def write_report(report: EvalReport, path: str) -> Tuple[str, str]:
    """
    Write the report as JSON and a per-image CSV next to it.

    Returns:
        ``(json_path, csv_path)``.
    """
    csv_path = os.path.splitext(path)[0] + ".csv"
    try:
        parent = os.path.dirname(path)
        if parent:
            os.makedirs(parent, exist_ok=True)
        with open(path, "w") as f:
            f.write(report.model_dump_json(indent=2))
        with open(csv_path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(CSV_COLUMNS)
            for item in report.images:
                c = item.counts or ConfusionCounts()
                r = item.rates or Rates()
                writer.writerow(
                    [
                        item.image,
                        c.tp,
                        c.fp,
                        c.fn,
                        c.tn,
                        "" if r.se is None else f"{r.se:.6f}",
                        "" if r.pred is None else f"{r.pred:.6f}",
                        "" if r.sp is None else f"{r.sp:.6f}",
                        "" if r.ac is None else f"{r.ac:.6f}",
                        item.regions,
                        item.grade.value if item.grade else "",
                        item.error or "",
                    ]
                )
    except OSError as e:
        raise ImageIOError(
            message=f"Cannot write report: {e}", code="write_failed", path=path
        ) from e
    return path, csv_path
