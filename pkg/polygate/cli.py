import argparse
import json
import sys
from collections.abc import Callable, Sequence
from pathlib import Path
from typing import Any, NoReturn, cast

from pydantic import ValidationError
from rich import print
from rich.markup import escape
from rich.panel import Panel
from rich.rule import Rule
from rich.table import Table

from polygate.config import PipelineConfig, config_echo, get_pipeline_config
from polygate.dataset import (
    Source,
    attach_removals,
    describe_corpus,
    ground_truth,
    ingest_sources,
    kfold_split,
    load_corpus,
    load_manifest,
    load_predictions,
    manifest_to_dict,
    write_corpus,
)
from polygate.errors import EXIT_INTERNAL, EXIT_OK, EXIT_USAGE, InputError, PolygateError, UsageError
from polygate.evaluation import EvalReport, evaluate, summarize_folds
from polygate.geometry import BBox, Connectivity
from polygate.losses import ClsBatch, DflBatch, loss_breakdown
from polygate.outlier import detect_outliers, featurize
from polygate.utils.artifacts import tool_header, tool_version, write_json

Command = Callable[[argparse.Namespace, PipelineConfig], int]


class _ArgumentParser(argparse.ArgumentParser):
    """Argument errors exit with the usage status instead of argparse's 2."""

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _header(config: PipelineConfig) -> dict[str, Any]:
    return {"tool": tool_header(), "config": config_echo(config)}


def _require(config: PipelineConfig, *names: str) -> None:
    missing = [f"--{name}" for name in names if getattr(config, name) is None]
    if missing:
        raise UsageError(f"missing required option(s): {', '.join(missing)}")


def _show_debug(diagnostics: dict[str, Any]) -> None:
    print(Panel(str(diagnostics), title="Debug diagnostics", border_style="blue"))


def _show_written(*paths: Path) -> None:
    listing = "\n".join(f"  {escape(str(path))}" for path in paths)
    print(
        Panel(
            f"[bold green]✅ Wrote {len(paths)} artifact(s):[/bold green]\n{listing}",
            title="Success",
            border_style="green",
        )
    )


def _show_warning(message: str) -> None:
    print(
        Panel(
            f"[bold yellow]⚠️ {escape(message)}[/bold yellow]",
            title="[bold yellow]Warning[/bold yellow]",
            border_style="yellow",
        )
    )


def _show_error(message: str, details: Sequence[str] = ()) -> None:
    body = "❌ " + escape(message)
    if details:
        body += "\n" + "\n".join(f"  - {escape(detail)}" for detail in details)
    print(Panel(body, title="Error", border_style="red"))


def _show_config(config: PipelineConfig) -> None:
    config_dict = {key: value for key, value in config_echo(config).items() if value is not None}
    print(
        Panel(
            str(config_dict),
            title="[bold blue]✅ Current Configuration[/bold blue]",
            border_style="blue",
        )
    )


def cmd_convert(args: argparse.Namespace, config: PipelineConfig) -> int:
    if args.source:
        sources = [Source(name, Path(images), Path(masks)) for name, images, masks in args.source]
    else:
        _require(config, "images", "masks", "dataset")
        sources = [
            Source(cast(str, config.dataset), cast(Path, config.images), cast(Path, config.masks))
        ]
    _require(config, "labels")
    labels = cast(Path, config.labels)

    samples = ingest_sources(
        sources,
        threshold=config.threshold,
        connectivity=cast(Connectivity, config.connectivity),
        min_area=config.min_area,
        workers=config.workers,
    )
    reports = write_corpus(samples, labels, _header(config))

    table = Table(title="Converted corpus")
    for column in ("dataset", "images", "width", "height", "boxes", "negatives"):
        table.add_column(column)
    for summary in describe_corpus(samples):
        table.add_row(
            summary.name,
            str(summary.images),
            f"{summary.min_width}–{summary.max_width}",
            f"{summary.min_height}–{summary.max_height}",
            str(summary.boxes),
            str(summary.negatives),
        )
    print(table)
    if config.debug:
        _show_debug(
            {
                "samples": len(samples),
                "dropped_components": sum(sample.dropped for sample in samples),
                "label_root": str(labels),
            }
        )
    _show_written(*reports)
    return EXIT_OK


def cmd_split(args: argparse.Namespace, config: PipelineConfig) -> int:
    _require(config, "labels", "output")
    samples = load_corpus(cast(Path, config.labels))
    manifest = kfold_split(
        samples, folds=config.folds, test=config.test, val=config.val, seed=config.seed
    )
    output = write_json(cast(Path, config.output), {**_header(config), **manifest_to_dict(manifest)})

    table = Table(title=f"{manifest.fold_count}-fold split of {len(samples)} samples")
    for column in ("fold", "train", "val", "test"):
        table.add_column(column, justify="right")
    for index, fold in enumerate(manifest.folds):
        table.add_row(str(index), str(len(fold.train)), str(len(fold.val)), str(len(fold.test)))
    print(table)
    if config.debug:
        _show_debug({"seed": manifest.seed, "prng": manifest.prng, "samples": len(samples)})
    _show_written(output)
    return EXIT_OK


def cmd_filter(args: argparse.Namespace, config: PipelineConfig) -> int:
    _require(config, "labels", "manifest")
    manifest_path = cast(Path, config.manifest)
    manifest = load_manifest(manifest_path)
    corpus = {sample.sample_id: sample for sample in load_corpus(cast(Path, config.labels))}
    unknown = sorted(set(manifest.sample_ids) - corpus.keys())
    if unknown:
        raise InputError("manifest ids missing from the converted corpus", details=unknown[:20])

    folds = [args.fold] if args.fold is not None else list(range(manifest.fold_count))
    fold_reports = []
    for fold in folds:
        split = manifest.fold(fold)
        ids = sorted((*split.train, *split.val))
        paths = {sample_id: corpus[sample_id].image_path for sample_id in ids}
        points = featurize(paths, config.feature_side)
        result = detect_outliers(points, k=config.k, contamination=config.contamination)
        manifest = attach_removals(manifest, fold, result.removed)
        fold_reports.append(
            {
                "fold": fold,
                "samples": len(ids),
                "removed": [{"id": sample_id, "score": score} for sample_id, score in result.removed],
                "scores": [
                    {"id": sample_id, "score": score} for sample_id, score in result.scores.ranked()
                ],
            }
        )
        print(
            f"[cyan]Fold {fold}:[/cyan] removed {len(result.removed)} of {len(ids)} "
            f"training/validation samples"
        )
        if config.debug:
            counts = result.scores.neighbor_counts
            _show_debug(
                {
                    "fold": fold,
                    "k": config.k,
                    "contamination": config.contamination,
                    "neighbor_set_sizes": [min(counts), max(counts)],
                    "top_scores": result.scores.ranked()[:5],
                }
            )

    output = config.output or manifest_path
    report_path = args.report or output.with_name(f"{output.stem}.lof.json")
    written = [
        write_json(output, {**_header(config), **manifest_to_dict(manifest)}),
        write_json(report_path, {**_header(config), "folds": fold_reports}),
    ]
    _show_written(*written)
    return EXIT_OK


def cmd_eval(args: argparse.Namespace, config: PipelineConfig) -> int:
    _require(config, "labels", "predictions", "output")
    if (config.manifest is None) != (args.fold is None):
        raise UsageError("--manifest and --fold must be given together")
    corpus = load_corpus(cast(Path, config.labels))
    detections, unmatched = load_predictions(cast(Path, config.predictions), corpus)
    for path in unmatched:
        _show_warning(f"Ignoring prediction file with no matching sample: {path}")

    samples = corpus
    if config.manifest is not None:
        test_ids = set(load_manifest(config.manifest).export(args.fold, "test"))
        missing = sorted(test_ids - {sample.sample_id for sample in corpus})
        if missing:
            raise InputError("test ids missing from the converted corpus", details=missing[:20])
        samples = [sample for sample in corpus if sample.sample_id in test_ids]
        detections = [detection for detection in detections if detection.image_id in test_ids]

    report = evaluate(detections, ground_truth(samples), iou_thr=config.iou, max_det=config.max_det)
    output = write_json(cast(Path, config.output), {**_header(config), **report.to_dict()})

    table = Table(title=f"Evaluation of {len(samples)} images")
    for column in ("precision", "recall", "F1", "mAP@0.5", "mAP@0.5:0.95"):
        table.add_column(column, justify="right")
    table.add_row(
        *(
            f"{100 * value:.2f}"
            for value in (report.precision, report.recall, report.f1, report.map50, report.map50_95)
        )
    )
    print(table)
    if config.debug:
        _show_debug({"per_threshold_ap": dict(report.per_threshold_ap), "counts": report.counts})
    _show_written(output)
    return EXIT_OK


def cmd_loss(args: argparse.Namespace, config: PipelineConfig) -> int:
    pred = BBox(*args.pred)
    gt = BBox(*args.gt)
    cls_batch = None
    if args.cls_y is not None or args.cls_p is not None:
        y = args.cls_y or []
        p = args.cls_p or []
        cls_batch = ClsBatch(y=y, p=p, w=args.cls_w if args.cls_w is not None else [1.0] * len(y))
    dfl_batch = None
    if args.dfl_p is not None:
        dfl_batch = DflBatch(p=args.dfl_p, x_pred=args.dfl_pred or [], x_gt=args.dfl_gt or [])

    breakdown = loss_breakdown(pred, gt, cls_batch, dfl_batch, config.loss)
    table = Table(title="Loss breakdown")
    for column in ("component", "value", "weight"):
        table.add_column(column)
    table.add_row("box", repr(breakdown.box), repr(config.loss.lambda_box))
    table.add_row("cls", repr(breakdown.cls), repr(config.loss.lambda_cls))
    table.add_row("dfl", repr(breakdown.dfl), repr(config.loss.lambda_dfl))
    print(table)
    print(Rule(f"[bold green]total = {breakdown.total!r}[/bold green]"))

    if config.output is not None:
        payload = {
            **_header(config),
            "box": breakdown.box,
            "cls": breakdown.cls,
            "dfl": breakdown.dfl,
            "total": breakdown.total,
        }
        _show_written(write_json(config.output, payload))
    return EXIT_OK


def cmd_summarize(args: argparse.Namespace, config: PipelineConfig) -> int:
    reports = []
    for path in args.reports:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, UnicodeDecodeError, json.JSONDecodeError) as error:
            raise InputError(f"cannot read evaluation report {path}: {error}") from error
        reports.append(EvalReport.from_dict(data))
    summary = summarize_folds(reports)

    table = Table(title=f"Mean ± std over {summary.folds} fold(s)")
    for column in ("metric", "mean", "std"):
        table.add_column(column)
    for name, mean in summary.mean.items():
        table.add_row(name, f"{100 * mean:.2f}", f"{100 * summary.std[name]:.2f}")
    print(table)

    if config.output is not None:
        payload = {**_header(config), "reports": [str(path) for path in args.reports]}
        _show_written(write_json(config.output, {**payload, **summary.to_dict()}))
    return EXIT_OK


COMMANDS: dict[str, Command] = {
    "convert": cmd_convert,
    "split": cmd_split,
    "filter": cmd_filter,
    "eval": cmd_eval,
    "loss": cmd_loss,
    "summarize": cmd_summarize,
}


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--show-config", action="store_true", help="Show current configuration")
    common.add_argument(
        "--debug",
        action="store_true",
        default=None,
        help="Show intermediate diagnostics",
    )
    common.add_argument("--output", type=str, help="Artifact to write")
    return common


def _create_argument_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(
        prog="polygate",
        description="Mask-to-box conversion, outlier filtering, and scoring for polyp detection",
    )
    parser.add_argument("-v", "--version", action="version", version=f"%(prog)s {tool_version()}")
    subparsers = parser.add_subparsers(dest="command", required=True, metavar="command")
    common = _common_parser()

    convert = subparsers.add_parser(
        "convert", parents=[common], help="Derive YOLO label files from segmentation masks"
    )
    convert.add_argument("--images", type=str, help="Directory of images")
    convert.add_argument("--masks", type=str, help="Directory of same-stem masks")
    convert.add_argument("--dataset", type=str, help="Dataset name (sample id prefix)")
    convert.add_argument(
        "--source",
        nargs=3,
        action="append",
        metavar=("NAME", "IMAGES", "MASKS"),
        help="Dataset to pool; repeat for several datasets",
    )
    convert.add_argument("--labels", type=str, help="Label tree root to write")
    convert.add_argument("--threshold", type=int, help="Mask binarization threshold (0-255)")
    convert.add_argument("--min_area", type=int, help="Drop components with fewer pixels")
    convert.add_argument("--connectivity", type=int, choices=[4, 8], help="Pixel adjacency")
    convert.add_argument("--workers", type=int, help="Ingestion worker threads")

    split = subparsers.add_parser(
        "split", parents=[common], help="Write a rotating k-fold train/val/test manifest"
    )
    split.add_argument("--labels", type=str, help="Converted label tree root")
    split.add_argument("--folds", type=int, help="Number of folds")
    split.add_argument("--test", type=float, help="Test fraction per fold")
    split.add_argument("--val", type=float, help="Validation fraction per fold")
    split.add_argument("--seed", type=int, help="Shuffle seed")

    filter_ = subparsers.add_parser(
        "filter", parents=[common], help="Remove LOF outliers from a fold's train/val ids"
    )
    filter_.add_argument("--labels", type=str, help="Converted label tree root")
    filter_.add_argument("--manifest", type=str, help="Split manifest to update")
    filter_.add_argument("--fold", type=int, help="Fold to filter (default: every fold)")
    filter_.add_argument("--k", type=int, help="LOF neighbor count")
    filter_.add_argument("--contamination", type=float, help="Fraction of samples to remove")
    filter_.add_argument("--feature_side", type=int, help="Side of the resampled feature raster")
    filter_.add_argument("--report", type=Path, help="Removal report path")

    eval_ = subparsers.add_parser(
        "eval", parents=[common], help="Score predictions against converted labels"
    )
    eval_.add_argument("--labels", type=str, help="Converted label tree root")
    eval_.add_argument("--predictions", type=str, help="Prediction tree root")
    eval_.add_argument("--manifest", type=str, help="Restrict to a fold's test ids")
    eval_.add_argument("--fold", type=int, help="Fold whose test ids are evaluated")
    eval_.add_argument("--iou", type=float, help="IoU threshold for precision/recall")
    eval_.add_argument("--max_det", type=int, help="Detections kept per image")

    loss = subparsers.add_parser("loss", parents=[common], help="Evaluate the detection loss")
    box_meta = ("X_MIN", "Y_MIN", "X_MAX", "Y_MAX")
    loss.add_argument("--pred", type=float, nargs=4, required=True, metavar=box_meta)
    loss.add_argument("--gt", type=float, nargs=4, required=True, metavar=box_meta)
    loss.add_argument("--cls_y", type=float, nargs="*", help="Binary labels")
    loss.add_argument("--cls_p", type=float, nargs="*", help="Predicted probabilities")
    loss.add_argument("--cls_w", type=float, nargs="*", help="Positive-class weights")
    loss.add_argument("--dfl_p", type=float, nargs="*", help="Distribution weights")
    loss.add_argument("--dfl_pred", type=float, nargs="*", help="Predicted coordinates")
    loss.add_argument("--dfl_gt", type=float, nargs="*", help="Ground-truth coordinates")
    loss.add_argument("--lambda_box", type=float, help="Box loss weight")
    loss.add_argument("--lambda_cls", type=float, help="Classification loss weight")
    loss.add_argument("--lambda_dfl", type=float, help="Distribution focal loss weight")

    summarize = subparsers.add_parser(
        "summarize", parents=[common], help="Mean and std of fold evaluation reports"
    )
    summarize.add_argument("--reports", nargs="+", required=True, help="Evaluation reports")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = _create_argument_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit_:
        if exit_.code is None:
            return EXIT_OK
        return exit_.code if isinstance(exit_.code, int) else EXIT_USAGE

    try:
        config = get_pipeline_config(args)
    except ValidationError as error:
        _show_error("Invalid configuration", [str(item["msg"]) for item in error.errors()])
        return EXIT_USAGE

    if args.show_config:
        _show_config(config)
        return EXIT_OK

    try:
        return COMMANDS[args.command](args, config)
    except PolygateError as error:
        _show_error(str(error), error.details)
        return error.exit_code
    except ValidationError as error:
        _show_error("Invalid arguments", [str(item["msg"]) for item in error.errors()])
        return EXIT_USAGE
    except Exception as error:
        _show_error("An internal error occurred: " + str(error))
        return EXIT_INTERNAL


if __name__ == "__main__":
    raise SystemExit(main())
