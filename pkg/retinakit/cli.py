"""
Command-line front end.

Subcommands: ``detect``, ``classify``, ``train``, ``grade``, ``eval`` and
``phantom``. Exit codes: 0 success, 1 usage or configuration error, 2 I/O
error, 3 pipeline failure.
"""

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence, Tuple

from dotenv import load_dotenv

from retinakit.classifier import cross_validate, grid_search, load_model, save_model, train
from retinakit.config import PipelineConfig, apply_overrides, load_config, parse_override_args
from retinakit.evalharness import evaluate_dataset, load_manifest, render_overlay, write_report
from retinakit.exceptions import ArgumentError, ImageIOError, RetinaKitError
from retinakit.imgio import load_image, load_interest_map, load_mask, resize_mask, save_image
from retinakit.models.exudate import ExudateClass
from retinakit.models.landmarks import RetinalLandmarks
from retinakit.pipeline import ExudatePipeline, StageCache
from retinakit.regions import regions_to_mask
from retinakit.testing.phantom import PhantomSpec, write_phantom_set
from retinakit.version import VERSION

logger = logging.getLogger("retinakit")

LOG_ENV = "RETINA_KIT_LOG"
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


class _Parser(argparse.ArgumentParser):
    """Argument parser that exits with the usage code 1."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _point(text: str) -> Tuple[float, float]:
    try:
        x, y = (float(v) for v in text.split(","))
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected x,y but got {text!r}") from e
    return x, y


def _stem(path: str) -> str:
    return os.path.splitext(os.path.basename(path))[0]


def _configure_logging(level: Optional[str]) -> None:
    name = (level or os.environ.get(LOG_ENV) or "WARNING").upper()
    logging.basicConfig(level=getattr(logging, name, logging.WARNING), format=LOG_FORMAT)


def _config(args: argparse.Namespace) -> PipelineConfig:
    config = load_config(args.config)
    overrides = parse_override_args(args.set)
    return apply_overrides(config, overrides) if overrides else config


def _emit(payload: dict, path: Optional[str]) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True)
    if not path:
        print(text)
        return
    try:
        parent = os.path.dirname(path)
        if parent:
            os.makedirs(parent, exist_ok=True)
        with open(path, "w") as f:
            f.write(text + "\n")
    except OSError as e:
        raise ImageIOError(
            message=f"Cannot write output: {e}", code="write_failed", path=path
        ) from e


def cmd_detect(args: argparse.Namespace) -> int:
    """Detect candidate regions and write the candidate mask."""
    config = _config(args)
    cache = StageCache(args.cache_dir) if args.cache_dir else None
    pipeline = ExudatePipeline(config, cache=cache)
    img = load_image(args.image)

    if args.from_dmap:
        detection = pipeline.detect_from_map(img, load_interest_map(args.from_dmap))
    else:
        detection = pipeline.detect(img)

    out_mask = args.out_mask or f"{_stem(args.image)}_mask.png"
    save_image(detection.full_mask(), out_mask)
    if args.out_overlay:
        render_overlay(detection.working, {"candidate": detection.mask}, args.out_overlay)
    if args.dump_intermediates:
        detection.dump(args.dump_intermediates, _stem(args.image))

    logger.info("%s: %d regions -> %s", args.image, len(detection.regions), out_mask)
    return 0


def cmd_classify(args: argparse.Namespace) -> int:
    """Detect and classify regions; print or write them as JSON."""
    pipeline = ExudatePipeline(_config(args))
    model = load_model(args.model)
    detection = pipeline.detect(load_image(args.image))
    records = pipeline.classify(detection, model)
    _emit(
        {
            "image": args.image,
            "working_shape": list(detection.working.shape),
            "regions": [r.model_dump(mode="json") for r in records],
        },
        args.out_json,
    )
    return 0


def _samples_for(pipeline: ExudatePipeline, entry) -> List:
    img = load_image(entry.image)
    exudate = load_mask(entry.exudate_mask)
    hard = load_mask(entry.hard_mask) if entry.hard_mask else None
    soft = load_mask(entry.soft_mask) if entry.soft_mask else None
    return pipeline.training_samples(img, exudate, hard, soft)


def cmd_train(args: argparse.Namespace) -> int:
    """Build a labelled feature set from a manifest, select hyperparameters and train."""
    config = _config(args)
    pipeline = ExudatePipeline(config)
    entries = load_manifest(args.manifest)

    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as executor:
        per_image = list(executor.map(lambda e: _samples_for(pipeline, e), entries))
    samples = [s for batch in per_image for s in batch]
    counts = {c.value: sum(1 for _, label in samples if label == c) for c in ExudateClass}
    logger.info("training set: %s", counts)

    hp = config.classifier
    folds = args.folds or hp.folds
    if args.grid:
        hp, reports = grid_search(samples, hp, folds, args.seed)
        best = max(reports, key=lambda r: r.accuracy_mean)
    else:
        best = cross_validate(samples, hp, folds, args.seed)

    model = train(samples, hp, args.seed)
    save_model(model, args.out_model)
    report_path = args.out_report or os.path.splitext(args.out_model)[0] + ".cv.json"
    _emit({"samples": counts, "cross_validation": best.model_dump(mode="json")}, report_path)
    logger.info("model written to %s (CV accuracy %.4f)", args.out_model, best.accuracy_mean)
    return 0


def cmd_grade(args: argparse.Namespace) -> int:
    """Grade severity from detected exudates around the given landmarks."""
    pipeline = ExudatePipeline(_config(args))
    img = load_image(args.image)
    detection = pipeline.detect(img)

    mask = detection.full_mask()
    if args.model:
        # only regions classified as exudates count towards the grade
        records = pipeline.classify(detection, load_model(args.model))
        kept = [r for r, rec in zip(detection.regions, records) if rec.cls != ExudateClass.OUTLIER]
        mask = resize_mask(regions_to_mask(kept, detection.working.shape), img.shape)

    landmarks = RetinalLandmarks(
        fovea=args.fovea, optic_disc=args.od, image_width=img.width, image_height=img.height
    )
    result = pipeline.grade(mask, landmarks)
    _emit(result.model_dump(mode="json"), args.out_json)
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    """Evaluate the detector on a manifest and write the report."""
    config = _config(args)
    model = load_model(args.model) if args.model else None
    report = evaluate_dataset(
        args.manifest,
        config,
        jobs=args.jobs,
        sweep=args.sweep,
        overlay_dir=args.overlays,
        model=model,
    )
    json_path, csv_path = write_report(report, args.out_report)
    summary = {
        "report": json_path,
        "csv": csv_path,
        "rates": report.rates.model_dump(),
        "score_auc": report.score_roc.auc if report.score_roc else None,
        "sweep_auc": report.sweep_roc.auc if report.sweep_roc else None,
        "failed": sum(1 for item in report.images if item.error),
    }
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def cmd_phantom(args: argparse.Namespace) -> int:
    """Write synthetic phantoms, their masks and a manifest."""
    spec = PhantomSpec()
    if args.spec:
        try:
            with open(args.spec, "r") as f:
                spec = PhantomSpec.model_validate(json.load(f))
        except (OSError, ValueError) as e:
            raise ArgumentError(
                message=f"Invalid phantom spec: {e}", code="phantom_spec", path=args.spec
            ) from e
    if args.seed is not None:
        spec = spec.model_copy(update={"seed": args.seed})
    manifest = write_phantom_set(args.out_dir, args.count, spec)
    print(manifest)
    return 0


def build_parser() -> argparse.ArgumentParser:
    """Create the argument parser with every subcommand."""
    common = _Parser(add_help=False)
    common.add_argument("--config", help="pipeline configuration JSON")
    common.add_argument(
        "--set",
        action="append",
        metavar="KEY=VALUE",
        help="override a config key, e.g. binarize.c=0.3",
    )

    parser = _Parser(
        prog="retinakit", description="Exudate detection and severity grading for fundus images"
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {VERSION}")
    parser.add_argument("--log-level", help=f"logging level (default: ${LOG_ENV} or WARNING)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    jobs_default = os.cpu_count() or 1

    p = sub.add_parser("detect", parents=[common], help="detect exudate candidates")
    p.add_argument("image")
    p.add_argument("--out-mask", help="candidate mask PNG (default: <stem>_mask.png)")
    p.add_argument("--out-overlay", help="overlay PNG at working resolution")
    p.add_argument(
        "--dump-intermediates", metavar="DIR", help="write decision map and binarised map"
    )
    p.add_argument("--cache-dir", help="reuse decision maps across runs")
    p.add_argument("--from-dmap", metavar="NPY", help="resume from a dumped decision map")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("classify", parents=[common], help="detect and classify regions")
    p.add_argument("image")
    p.add_argument("--model", required=True, help="trained model JSON")
    p.add_argument("--out-json", help="output file (default: stdout)")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("train", parents=[common], help="train the region classifier")
    p.add_argument("manifest")
    p.add_argument("--out-model", required=True)
    p.add_argument("--out-report", help="cross-validation report (default: <model>.cv.json)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--folds", type=int)
    p.add_argument(
        "--no-grid", dest="grid", action="store_false", help="skip the hyperparameter search"
    )
    p.add_argument("--jobs", type=int, default=jobs_default)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("grade", parents=[common], help="grade severity")
    p.add_argument("image")
    p.add_argument("--fovea", type=_point, required=True, metavar="X,Y")
    p.add_argument("--od", type=_point, required=True, metavar="X,Y")
    p.add_argument("--model", help="count only regions classified as exudates")
    p.add_argument("--out-json", help="output file (default: stdout)")
    p.set_defaults(func=cmd_grade)

    p = sub.add_parser("eval", parents=[common], help="evaluate on a manifest")
    p.add_argument("manifest")
    p.add_argument("--out-report", default="report.json")
    p.add_argument("--sweep", action="store_true", help="also sweep the Sauvola sensitivity")
    p.add_argument("--overlays", metavar="DIR", help="write overlay PNGs")
    p.add_argument("--model", help="classify regions for the overlays")
    p.add_argument("--jobs", type=int, default=jobs_default)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("phantom", help="write synthetic phantoms")
    p.add_argument("--spec", help="phantom spec JSON")
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, help="first seed (default: the seed in --spec)")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_phantom)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Entry point of the ``retinakit`` console script.

    Returns:
        The process exit code.
    """
    load_dotenv()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    _configure_logging(args.log_level)
    try:
        return int(args.func(args))
    except RetinaKitError as e:
        logger.error("%s", e)
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
