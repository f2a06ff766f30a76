"""Text grammars for label files (``class cx cy w h``) and prediction files (``... conf``)."""

import math
from collections.abc import Sequence
from pathlib import Path
from typing import TYPE_CHECKING

from polygate.errors import GeometryError, InputError, ParseError
from polygate.evaluation import Detection
from polygate.geometry import NormBox, from_norm
from polygate.utils.artifacts import atomic_write_text

if TYPE_CHECKING:
    from polygate.dataset.samples import Sample

LABEL_SUFFIX = ".txt"
LABEL_FIELDS = 5
PREDICTION_FIELDS = 6


def format_label_line(box: NormBox) -> str:
    return f"{box.class_id} {box.cx:.6f} {box.cy:.6f} {box.w:.6f} {box.h:.6f}"


def format_prediction_line(box: NormBox, confidence: float) -> str:
    return f"{format_label_line(box)} {confidence:.6f}"


def format_labels(boxes: Sequence[NormBox]) -> str:
    """One LF-terminated line per box; no boxes gives the empty string."""
    return "".join(format_label_line(box) + "\n" for box in boxes)


def label_path(out_dir: Path, sample_id: str) -> Path:
    """``<out_dir>/<dataset>/<stem>.txt`` for a ``<dataset>/<stem>`` sample id."""
    dataset, stem = sample_id.split("/", 1)
    return out_dir / dataset / f"{stem}{LABEL_SUFFIX}"


def write_labels(sample: "Sample", out_dir: Path) -> Path:
    return atomic_write_text(label_path(out_dir, sample.sample_id), format_labels(sample.boxes))


def _read_lines(path: Path) -> list[str]:
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as error:
        raise InputError(f"cannot read {path}: {error}") from error
    return text.splitlines()


def _parse_box(fields: list[str], path: Path, line_number: int) -> NormBox:
    try:
        class_id = int(fields[0])
        cx, cy, w, h = (float(token) for token in fields[1:5])
    except ValueError as error:
        raise ParseError(f"invalid number: {error}", path, line_number) from error
    try:
        return NormBox(class_id=class_id, cx=cx, cy=cy, w=w, h=h)
    except GeometryError as error:
        raise ParseError(str(error), path, line_number) from error


def parse_labels(path: Path) -> list[NormBox]:
    boxes = []
    for line_number, line in enumerate(_read_lines(path), start=1):
        fields = line.split()
        if not fields:
            continue
        if len(fields) != LABEL_FIELDS:
            raise ParseError(
                f"expected {LABEL_FIELDS} fields (class cx cy w h), got {len(fields)}",
                path,
                line_number,
            )
        boxes.append(_parse_box(fields, path, line_number))
    return boxes


def parse_predictions(
    path: Path, width: int, height: int, image_id: str | None = None
) -> list[Detection]:
    """Read detections and denormalize them against the image's stored size.

    ``image_id`` defaults to the file stem.
    """
    image_id = image_id if image_id is not None else path.stem
    detections = []
    for line_number, line in enumerate(_read_lines(path), start=1):
        fields = line.split()
        if not fields:
            continue
        if len(fields) != PREDICTION_FIELDS:
            raise ParseError(
                f"expected {PREDICTION_FIELDS} fields (class cx cy w h conf), got {len(fields)}",
                path,
                line_number,
            )
        box = _parse_box(fields, path, line_number)
        try:
            confidence = float(fields[5])
        except ValueError as error:
            raise ParseError(f"invalid confidence: {error}", path, line_number) from error
        if not (math.isfinite(confidence) and 0.0 <= confidence <= 1.0):
            raise ParseError(f"confidence {fields[5]} outside [0, 1]", path, line_number)
        try:
            pixel_box = from_norm(box, width, height)
        except GeometryError as error:
            raise ParseError(str(error), path, line_number) from error
        detections.append(
            Detection(image_id=image_id, class_id=box.class_id, box=pixel_box, confidence=confidence)
        )
    return detections
