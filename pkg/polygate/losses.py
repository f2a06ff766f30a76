"""Standalone loss kernels: CIoU box loss, weighted BCE, coordinate DFL, and their weighted total.

All kernels return sums over their inputs, never means.
"""

import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Final

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, Field, field_validator

from polygate.errors import LossError
from polygate.geometry import BBox, iou

PROB_EPS: Final[float] = 1e-7
ASPECT_COEFF: Final[float] = 4 / math.pi**2


class LossWeights(BaseModel):
    """λ multipliers of the total loss."""

    lambda_box: float = Field(default=7.5, ge=0.0, description="Box (CIoU) loss weight")
    lambda_cls: float = Field(default=0.5, ge=0.0, description="Classification loss weight")
    lambda_dfl: float = Field(default=1.5, ge=0.0, description="Distribution focal loss weight")

    @field_validator("lambda_box", "lambda_cls", "lambda_dfl")
    @classmethod
    def validate_finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("loss weights must be finite")
        return value

    model_config = {"frozen": True}


def _as_vector(values: Sequence[float] | NDArray[np.float64], name: str) -> NDArray[np.float64]:
    array = np.array(values, dtype=np.float64)
    if array.ndim != 1:
        raise LossError(f"{name} must be a flat sequence")
    if not np.isfinite(array).all():
        raise LossError(f"{name} must be finite")
    return array


@dataclass(frozen=True, eq=False)
class ClsBatch:
    """Labels, probabilities in [0, 1], and per-class positive weights; probabilities are clamped."""

    y: NDArray[np.float64] = field(repr=False)
    p: NDArray[np.float64] = field(repr=False)
    w: NDArray[np.float64] = field(repr=False)

    def __post_init__(self) -> None:
        y = _as_vector(self.y, "labels")
        p = _as_vector(self.p, "probabilities")
        w = _as_vector(self.w, "class weights")
        if not len(y) == len(p) == len(w):
            raise LossError(f"batch lengths differ: y={len(y)}, p={len(p)}, w={len(w)}")
        if not np.isin(y, (0.0, 1.0)).all():
            raise LossError("labels must be 0 or 1")
        if ((p < 0.0) | (p > 1.0)).any():
            raise LossError("probabilities must lie in [0, 1]")
        if (w <= 0).any():
            raise LossError("class weights must be positive")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "p", np.clip(p, PROB_EPS, 1.0 - PROB_EPS))
        object.__setattr__(self, "w", w)

    def __len__(self) -> int:
        return len(self.y)


@dataclass(frozen=True, eq=False)
class DflBatch:
    p: NDArray[np.float64] = field(repr=False)
    x_pred: NDArray[np.float64] = field(repr=False)
    x_gt: NDArray[np.float64] = field(repr=False)

    def __post_init__(self) -> None:
        p = _as_vector(self.p, "weights")
        x_pred = _as_vector(self.x_pred, "predicted coordinates")
        x_gt = _as_vector(self.x_gt, "ground-truth coordinates")
        if not len(p) == len(x_pred) == len(x_gt):
            raise LossError(
                f"batch lengths differ: p={len(p)}, x_pred={len(x_pred)}, x_gt={len(x_gt)}"
            )
        if (p < 0).any():
            raise LossError("weights must be non-negative")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "x_pred", x_pred)
        object.__setattr__(self, "x_gt", x_gt)

    def __len__(self) -> int:
        return len(self.p)


@dataclass(frozen=True)
class LossBreakdown:
    box: float
    cls: float
    dfl: float
    total: float
    weights: LossWeights


def box_loss(pred: BBox, gt: BBox) -> float:
    """CIoU loss ``1 − IoU + ρ²/c² + αv``."""
    overlap = iou(pred, gt)

    pred_cx, pred_cy = pred.center
    gt_cx, gt_cy = gt.center
    rho2 = (pred_cx - gt_cx) ** 2 + (pred_cy - gt_cy) ** 2
    enclose_w = max(pred.x_max, gt.x_max) - min(pred.x_min, gt.x_min)
    enclose_h = max(pred.y_max, gt.y_max) - min(pred.y_min, gt.y_min)
    c2 = enclose_w**2 + enclose_h**2

    v = ASPECT_COEFF * (math.atan(gt.width / gt.height) - math.atan(pred.width / pred.height)) ** 2
    alpha = v / ((1.0 - overlap) + v) if v > 0 else 0.0

    return 1.0 - overlap + rho2 / c2 + alpha * v


def cls_loss(batch: ClsBatch) -> float:
    """``−Σ [w·y·log p + (1−y)·log(1−p)]``; the weight scales the positive term only."""
    if len(batch) == 0:
        return 0.0
    terms = batch.w * batch.y * np.log(batch.p) + (1.0 - batch.y) * np.log1p(-batch.p)
    return float(-terms.sum())


def dfl_loss(batch: DflBatch) -> float:
    """``Σ p·|x_pred − x_gt|``."""
    if len(batch) == 0:
        return 0.0
    return float((batch.p * np.abs(batch.x_pred - batch.x_gt)).sum())


def total_loss(box: float, cls: float, dfl: float, weights: LossWeights | None = None) -> float:
    weights = weights or LossWeights()
    components = (box, cls, dfl)
    if not all(math.isfinite(value) for value in components):
        raise LossError(f"loss components must be finite: {components}")
    return weights.lambda_box * box + weights.lambda_cls * cls + weights.lambda_dfl * dfl


def loss_breakdown(
    pred: BBox,
    gt: BBox,
    cls_batch: ClsBatch | None = None,
    dfl_batch: DflBatch | None = None,
    weights: LossWeights | None = None,
) -> LossBreakdown:
    weights = weights or LossWeights()
    box = box_loss(pred, gt)
    cls = cls_loss(cls_batch) if cls_batch is not None else 0.0
    dfl = dfl_loss(dfl_batch) if dfl_batch is not None else 0.0
    return LossBreakdown(
        box=box, cls=cls, dfl=dfl, total=total_loss(box, cls, dfl, weights), weights=weights
    )
