"""Detection scoring: greedy matching, precision/recall/F1, interpolated AP, and mAP."""

import math
from collections import defaultdict
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any, Final

import numpy as np

from polygate.errors import EvaluationError
from polygate.geometry import BBox, iou

DEFAULT_IOU: Final[float] = 0.5
DEFAULT_MAX_DET: Final[int] = 300
COCO_THRESHOLDS: Final[tuple[float, ...]] = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
RECALL_POINTS: Final[int] = 101
REPORT_METRICS: Final[tuple[str, ...]] = ("precision", "recall", "f1", "map50", "map50_95")


@dataclass(frozen=True)
class Detection:
    image_id: str
    class_id: int
    box: BBox
    confidence: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.confidence) and 0.0 <= self.confidence <= 1.0):
            raise EvaluationError(f"confidence must lie in [0, 1], got {self.confidence}")


@dataclass(frozen=True)
class GroundTruth:
    image_id: str
    class_id: int
    box: BBox


@dataclass(frozen=True)
class DetectionRecord:
    """Verdict for one detection; ``index`` is its position in the matched input list."""

    index: int
    image_id: str
    class_id: int
    confidence: float
    is_tp: bool
    matched_gt: int | None
    iou: float


@dataclass(frozen=True)
class MatchOutcome:
    """Verdicts in descending-confidence order plus the ground truth left unmatched."""

    iou_thr: float
    records: tuple[DetectionRecord, ...]
    gt_per_class: Mapping[int, int]
    fn_per_image: Mapping[str, int]

    @property
    def tp(self) -> int:
        return sum(record.is_tp for record in self.records)

    @property
    def fp(self) -> int:
        return len(self.records) - self.tp

    @property
    def fn(self) -> int:
        return sum(self.fn_per_image.values())

    @property
    def total_gt(self) -> int:
        return sum(self.gt_per_class.values())


@dataclass(frozen=True)
class PrPoint:
    confidence: float
    recall: float
    precision: float


@dataclass(frozen=True)
class PrCurve:
    points: tuple[PrPoint, ...]
    ap: float


@dataclass(frozen=True)
class MapResult:
    per_threshold: Mapping[float, float]
    mean: float


@dataclass(frozen=True)
class Counts:
    tp: int
    fp: int
    fn: int
    gt: int
    detections: int


@dataclass(frozen=True)
class EvalReport:
    precision: float
    recall: float
    f1: float
    map50: float
    map50_95: float
    per_threshold_ap: Mapping[str, float]
    counts: Counts
    pr_curve: tuple[PrPoint, ...] = field(default=(), repr=False)

    def to_dict(self) -> dict[str, Any]:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "map50": self.map50,
            "map50_95": self.map50_95,
            "per_threshold_ap": dict(self.per_threshold_ap),
            "counts": {
                "tp": self.counts.tp,
                "fp": self.counts.fp,
                "fn": self.counts.fn,
                "gt": self.counts.gt,
                "detections": self.counts.detections,
            },
            "pr_curve": [
                {"confidence": point.confidence, "recall": point.recall, "precision": point.precision}
                for point in self.pr_curve
            ],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "EvalReport":
        try:
            counts = data["counts"]
            return cls(
                precision=float(data["precision"]),
                recall=float(data["recall"]),
                f1=float(data["f1"]),
                map50=float(data["map50"]),
                map50_95=float(data["map50_95"]),
                per_threshold_ap={
                    str(key): float(value) for key, value in data["per_threshold_ap"].items()
                },
                counts=Counts(
                    tp=int(counts["tp"]),
                    fp=int(counts["fp"]),
                    fn=int(counts["fn"]),
                    gt=int(counts["gt"]),
                    detections=int(counts["detections"]),
                ),
                pr_curve=tuple(
                    PrPoint(
                        float(point["confidence"]),
                        float(point["recall"]),
                        float(point["precision"]),
                    )
                    for point in data.get("pr_curve", [])
                ),
            )
        except (KeyError, TypeError, ValueError, AttributeError) as error:
            raise EvaluationError(f"malformed evaluation report: {error}") from error


@dataclass(frozen=True)
class FoldSummary:
    folds: int
    mean: Mapping[str, float]
    std: Mapping[str, float]

    def to_dict(self) -> dict[str, Any]:
        return {
            "folds": self.folds,
            "metrics": {
                name: {"mean": self.mean[name], "std": self.std[name]} for name in REPORT_METRICS
            },
        }


def threshold_key(threshold: float) -> str:
    return f"{threshold:.2f}"


def _validate_threshold(iou_thr: float) -> None:
    if not 0.0 < iou_thr < 1.0:
        raise EvaluationError(f"IoU threshold must lie in (0, 1), got {iou_thr}")


def _by_confidence(detections: Sequence[Detection]) -> list[int]:
    """Indices by descending confidence; Python's stable sort keeps input order for ties."""
    return sorted(range(len(detections)), key=lambda i: -detections[i].confidence)


def cap_detections(detections: Sequence[Detection], max_det: int = DEFAULT_MAX_DET) -> list[Detection]:
    """Keep each image's ``max_det`` most confident detections, in input order."""
    if max_det < 1:
        raise EvaluationError(f"max detections must be positive, got {max_det}")
    kept_per_image: dict[str, int] = defaultdict(int)
    keep: set[int] = set()
    for i in _by_confidence(detections):
        image_id = detections[i].image_id
        if kept_per_image[image_id] < max_det:
            kept_per_image[image_id] += 1
            keep.add(i)
    return [detection for i, detection in enumerate(detections) if i in keep]


def match(
    detections: Sequence[Detection], ground_truth: Sequence[GroundTruth], iou_thr: float
) -> MatchOutcome:
    """Greedy one-to-one matching in descending confidence.

    Each detection takes the unmatched same-image, same-class ground truth with the
    highest IoU at or above ``iou_thr`` (lowest index on ties), otherwise it is a
    false positive.
    """
    _validate_threshold(iou_thr)
    candidates: dict[tuple[str, int], list[int]] = defaultdict(list)
    gt_per_class: dict[int, int] = defaultdict(int)
    for g, gt in enumerate(ground_truth):
        candidates[(gt.image_id, gt.class_id)].append(g)
        gt_per_class[gt.class_id] += 1

    matched: set[int] = set()
    records = []
    for i in _by_confidence(detections):
        detection = detections[i]
        best: int | None = None
        best_iou = 0.0
        for g in candidates.get((detection.image_id, detection.class_id), ()):
            if g in matched:
                continue
            overlap = iou(detection.box, ground_truth[g].box)
            if overlap >= iou_thr and (best is None or overlap > best_iou):
                best, best_iou = g, overlap
        if best is not None:
            matched.add(best)
        records.append(
            DetectionRecord(
                index=i,
                image_id=detection.image_id,
                class_id=detection.class_id,
                confidence=detection.confidence,
                is_tp=best is not None,
                matched_gt=best,
                iou=best_iou,
            )
        )

    fn_per_image: dict[str, int] = defaultdict(int)
    for g, gt in enumerate(ground_truth):
        fn_per_image[gt.image_id] += g not in matched

    return MatchOutcome(
        iou_thr=iou_thr,
        records=tuple(records),
        gt_per_class=dict(gt_per_class),
        fn_per_image=dict(fn_per_image),
    )


def precision_recall_f1(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    """Precision, recall, and F1 with every 0/0 defined as 0."""
    if min(tp, fp, fn) < 0:
        raise EvaluationError(f"counts must be non-negative: tp={tp}, fp={fp}, fn={fn}")
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = 2 * (precision * recall) / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1


def pr_curve(outcome: MatchOutcome, class_id: int | None = None) -> PrCurve:
    """Sweep by descending confidence and average the precision envelope at 101 recall points.

    Recall point ``i/100`` counts as reached once ``100·TP ≥ i·n_gt``, compared in
    integers so no point is lost to rounding.
    """
    if class_id is None:
        records = outcome.records
        n_gt = outcome.total_gt
    else:
        records = tuple(record for record in outcome.records if record.class_id == class_id)
        n_gt = outcome.gt_per_class.get(class_id, 0)
    if n_gt == 0:
        raise EvaluationError("average precision is undefined without ground truth")

    hits = np.array([record.is_tp for record in records], dtype=np.int64)
    tp_cum = np.cumsum(hits)
    fp_cum = np.cumsum(1 - hits)
    recall = tp_cum / n_gt
    precision = tp_cum / np.maximum(tp_cum + fp_cum, 1)
    points = tuple(
        PrPoint(record.confidence, float(r), float(p))
        for record, r, p in zip(records, recall, precision, strict=True)
    )
    if len(records) == 0:
        return PrCurve(points=points, ap=0.0)

    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    targets = np.arange(RECALL_POINTS, dtype=np.int64) * n_gt
    first_reached = np.searchsorted(tp_cum * (RECALL_POINTS - 1), targets, side="left")
    reached = first_reached < len(records)
    samples = np.where(reached, envelope[np.minimum(first_reached, len(records) - 1)], 0.0)
    return PrCurve(points=points, ap=float(samples.sum()) / RECALL_POINTS)


def _mean_class_ap(outcome: MatchOutcome) -> float:
    classes = sorted(class_id for class_id, count in outcome.gt_per_class.items() if count > 0)
    return sum(pr_curve(outcome, class_id).ap for class_id in classes) / len(classes)


def map_at(
    detections: Sequence[Detection],
    ground_truth: Sequence[GroundTruth],
    thresholds: Iterable[float] = COCO_THRESHOLDS,
) -> MapResult:
    """AP per IoU threshold (mean over classes with ground truth) and their mean."""
    if not ground_truth:
        raise EvaluationError("mAP is undefined without ground truth")
    per_threshold = {}
    for threshold in thresholds:
        _validate_threshold(threshold)
        per_threshold[threshold] = _mean_class_ap(match(detections, ground_truth, threshold))
    if not per_threshold:
        raise EvaluationError("at least one IoU threshold is required")
    return MapResult(
        per_threshold=per_threshold,
        mean=sum(per_threshold.values()) / len(per_threshold),
    )


def evaluate(
    detections: Sequence[Detection],
    ground_truth: Sequence[GroundTruth],
    iou_thr: float = DEFAULT_IOU,
    max_det: int = DEFAULT_MAX_DET,
) -> EvalReport:
    """Score capped detections: the scalar row at ``iou_thr`` plus mAP@0.5 and mAP@0.5:0.95."""
    if not ground_truth:
        raise EvaluationError("no ground truth boxes to evaluate against")
    _validate_threshold(iou_thr)
    capped = cap_detections(detections, max_det)

    outcome = match(capped, ground_truth, iou_thr)
    precision, recall, f1 = precision_recall_f1(outcome.tp, outcome.fp, outcome.fn)
    coco = map_at(capped, ground_truth, COCO_THRESHOLDS)

    return EvalReport(
        precision=precision,
        recall=recall,
        f1=f1,
        map50=coco.per_threshold[0.5],
        map50_95=coco.mean,
        per_threshold_ap={threshold_key(t): ap for t, ap in coco.per_threshold.items()},
        counts=Counts(
            tp=outcome.tp,
            fp=outcome.fp,
            fn=outcome.fn,
            gt=outcome.total_gt,
            detections=len(capped),
        ),
        pr_curve=pr_curve(outcome).points,
    )


def summarize_folds(reports: Sequence[EvalReport]) -> FoldSummary:
    """Mean and sample standard deviation of each headline metric across folds."""
    if not reports:
        raise EvaluationError("at least one fold report is required")
    mean = {}
    std = {}
    for name in REPORT_METRICS:
        values = np.array([getattr(report, name) for report in reports], dtype=np.float64)
        mean[name] = float(values.mean())
        std[name] = float(values.std(ddof=1)) if len(values) > 1 else 0.0
    return FoldSummary(folds=len(reports), mean=mean, std=std)
