"""A converted corpus on disk: label files plus one ``conversion.json`` per dataset."""

import json
from collections.abc import Mapping, Sequence
from pathlib import Path
from typing import Any

from polygate.dataset.labels import label_path, parse_labels, parse_predictions, write_labels
from polygate.dataset.samples import Sample, describe_corpus
from polygate.errors import InputError
from polygate.evaluation import Detection, GroundTruth
from polygate.geometry import from_norm
from polygate.utils.artifacts import write_json

CONVERSION_FILE = "conversion.json"


def sample_record(sample: Sample) -> dict[str, Any]:
    return {
        "id": sample.sample_id,
        "image": str(sample.image_path),
        "mask": str(sample.mask_path),
        "width": sample.width,
        "height": sample.height,
        "boxes": len(sample.boxes),
        "dropped": sample.dropped,
    }


def write_corpus(
    samples: Sequence[Sample], labels_dir: Path, header: Mapping[str, Any]
) -> list[Path]:
    """Write every label file, then each dataset's conversion report; returns the reports."""
    by_dataset: dict[str, list[Sample]] = {}
    for sample in sorted(samples, key=lambda sample: sample.sample_id):
        by_dataset.setdefault(sample.dataset, []).append(sample)

    reports = []
    for name, group in sorted(by_dataset.items()):
        for sample in group:
            write_labels(sample, labels_dir)
        report = {
            **header,
            "dataset": name,
            "summary": [summary.to_dict() for summary in describe_corpus(group)],
            "samples": [sample_record(sample) for sample in group],
        }
        reports.append(write_json(labels_dir / name / CONVERSION_FILE, report))
    return reports


def find_conversions(labels_dir: Path) -> list[Path]:
    if not labels_dir.is_dir():
        raise InputError(f"label directory not found: {labels_dir}")
    found = sorted(labels_dir.rglob(CONVERSION_FILE))
    if not found:
        raise InputError(f"no converted corpus under {labels_dir}; run `polygate convert` first")
    return found


def _load_records(path: Path) -> list[dict[str, Any]]:
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
        records = data["samples"]
        if not isinstance(records, list):
            raise TypeError("'samples' is not a list")
        return records
    except (OSError, UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as error:
        raise InputError(f"cannot read conversion report {path}: {error!r}") from error


def load_corpus(labels_dir: Path) -> list[Sample]:
    """Every sample recorded under ``labels_dir``, with boxes re-read from its label file."""
    samples = []
    seen: set[str] = set()
    for report in find_conversions(labels_dir):
        for record in _load_records(report):
            try:
                sample_id = str(record["id"])
                image_path = Path(record["image"])
                mask_path = Path(record["mask"])
                width = int(record["width"])
                height = int(record["height"])
                dropped = int(record.get("dropped", 0))
            except (KeyError, TypeError, ValueError) as error:
                raise InputError(f"{report}: malformed sample record {record!r}") from error
            if sample_id in seen:
                raise InputError(f"{report}: duplicate sample id {sample_id}")
            seen.add(sample_id)
            samples.append(
                Sample(
                    sample_id=sample_id,
                    image_path=image_path,
                    mask_path=mask_path,
                    width=width,
                    height=height,
                    boxes=tuple(parse_labels(label_path(labels_dir, sample_id))),
                    dropped=dropped,
                )
            )
    return sorted(samples, key=lambda sample: sample.sample_id)


def ground_truth(samples: Sequence[Sample]) -> list[GroundTruth]:
    return [
        GroundTruth(
            image_id=sample.sample_id,
            class_id=box.class_id,
            box=from_norm(box, sample.width, sample.height),
        )
        for sample in samples
        for box in sample.boxes
    ]


def load_predictions(
    predictions_dir: Path, samples: Sequence[Sample]
) -> tuple[list[Detection], list[Path]]:
    """Detections for ``samples`` from a tree mirroring the label layout.

    A missing file means the image has no detections. Also returns the prediction
    files that match no sample.
    """
    if not predictions_dir.is_dir():
        raise InputError(f"prediction directory not found: {predictions_dir}")
    detections: list[Detection] = []
    expected = set()
    for sample in samples:
        path = label_path(predictions_dir, sample.sample_id)
        expected.add(path.resolve())
        if path.is_file():
            detections.extend(parse_predictions(path, sample.width, sample.height, sample.sample_id))
    unmatched = sorted(
        path for path in predictions_dir.rglob("*.txt") if path.resolve() not in expected
    )
    return detections, unmatched
