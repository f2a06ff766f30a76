"""Image/mask corpora: ingestion into samples with normalized boxes, pooling, and summaries."""

from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
from PIL import Image, UnidentifiedImageError

from polygate.errors import GeometryError, IngestionError, InputError
from polygate.geometry import (
    DEFAULT_CONNECTIVITY,
    DEFAULT_MIN_AREA,
    DEFAULT_THRESHOLD,
    Connectivity,
    NormBox,
    binarize,
    mask_to_boxes,
    to_norm,
)

IMAGE_SUFFIXES = frozenset({".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"})


@dataclass(frozen=True)
class Sample:
    """One image with the boxes derived from its mask; ``sample_id`` is ``<dataset>/<stem>``."""

    sample_id: str
    image_path: Path
    mask_path: Path
    width: int
    height: int
    boxes: tuple[NormBox, ...]
    dropped: int = 0

    @property
    def dataset(self) -> str:
        return self.sample_id.split("/", 1)[0]

    @property
    def stem(self) -> str:
        return self.sample_id.split("/", 1)[1]

    @property
    def is_negative(self) -> bool:
        return not self.boxes


@dataclass(frozen=True)
class Source:
    name: str
    images: Path
    masks: Path


@dataclass(frozen=True)
class DatasetSummary:
    name: str
    images: int
    min_width: int
    max_width: int
    min_height: int
    max_height: int
    boxes: int
    negatives: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "images": self.images,
            "width": [self.min_width, self.max_width],
            "height": [self.min_height, self.max_height],
            "boxes": self.boxes,
            "negatives": self.negatives,
        }


def make_sample_id(dataset_name: str, stem: str) -> str:
    return f"{dataset_name}/{stem}"


def _validate_dataset_name(dataset_name: str) -> None:
    if not dataset_name or "/" in dataset_name or dataset_name.strip() != dataset_name:
        raise InputError(f"invalid dataset name: {dataset_name!r}")


def _image_files(directory: Path) -> list[Path]:
    return sorted(
        path for path in directory.iterdir() if path.is_file() and path.suffix.lower() in IMAGE_SUFFIXES
    )


def _index_by_stem(files: list[Path], kind: str, failures: list[str]) -> dict[str, Path]:
    index: dict[str, Path] = {}
    for path in files:
        if path.stem in index:
            failures.append(f"{path}: duplicate {kind} stem (also {index[path.stem].name})")
            continue
        index[path.stem] = path
    return index


def _read_size(path: Path) -> tuple[int, int]:
    try:
        with Image.open(path) as image:
            image.load()
            return image.size
    except (OSError, UnidentifiedImageError, ValueError) as error:
        raise InputError(f"{path}: unreadable image ({error})") from error


def _read_mask(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as image:
            return np.asarray(image.convert("L"))
    except (OSError, UnidentifiedImageError, ValueError) as error:
        raise InputError(f"{path}: unreadable mask ({error})") from error


def load_sample(
    sample_id: str,
    image_path: Path,
    mask_path: Path,
    threshold: int = DEFAULT_THRESHOLD,
    connectivity: Connectivity = DEFAULT_CONNECTIVITY,
    min_area: int = DEFAULT_MIN_AREA,
) -> Sample:
    """Binarize the mask, box each component, and normalize against the image size."""
    width, height = _read_size(image_path)
    pixels = _read_mask(mask_path)
    if pixels.shape != (height, width):
        raise InputError(
            f"{mask_path}: mask is {pixels.shape[1]}×{pixels.shape[0]}, image is {width}×{height}"
        )
    try:
        found = mask_to_boxes(binarize(pixels, threshold), connectivity, min_area)
        boxes = tuple(to_norm(box, width, height) for box in found.boxes)
    except GeometryError as error:
        raise InputError(f"{mask_path}: {error}") from error
    return Sample(
        sample_id=sample_id,
        image_path=image_path,
        mask_path=mask_path,
        width=width,
        height=height,
        boxes=boxes,
        dropped=found.dropped,
    )


def ingest(
    image_dir: Path,
    mask_dir: Path,
    dataset_name: str,
    threshold: int = DEFAULT_THRESHOLD,
    connectivity: Connectivity = DEFAULT_CONNECTIVITY,
    min_area: int = DEFAULT_MIN_AREA,
    workers: int | None = None,
) -> list[Sample]:
    """Pair every image with its same-stem mask and derive its boxes.

    Files are processed in parallel; the result is sorted by sample id. Any failure
    aborts the whole run with one :class:`IngestionError` listing every failed item.
    """
    _validate_dataset_name(dataset_name)
    for directory, kind in ((image_dir, "image"), (mask_dir, "mask")):
        if not directory.is_dir():
            raise IngestionError(f"{kind} directory not found: {directory}")

    failures: list[str] = []
    images = _index_by_stem(_image_files(image_dir), "image", failures)
    masks = _index_by_stem(_image_files(mask_dir), "mask", failures)
    if not images and not failures:
        raise IngestionError(f"no images found in {image_dir}")

    pairs = []
    for stem in sorted(images):
        if stem not in masks:
            failures.append(f"{images[stem]}: no mask named {stem}.* in {mask_dir}")
            continue
        pairs.append((make_sample_id(dataset_name, stem), images[stem], masks[stem]))

    def load(pair: tuple[str, Path, Path]) -> Sample | str:
        try:
            return load_sample(*pair, threshold=threshold, connectivity=connectivity, min_area=min_area)
        except InputError as error:
            return str(error)

    with ThreadPoolExecutor(max_workers=workers) as executor:
        results = list(executor.map(load, pairs))

    samples = [result for result in results if isinstance(result, Sample)]
    failures.extend(result for result in results if isinstance(result, str))
    if failures:
        raise IngestionError(
            f"{len(failures)} item(s) failed while ingesting {dataset_name!r}", details=failures
        )
    return sorted(samples, key=lambda sample: sample.sample_id)


def ingest_sources(
    sources: Sequence[Source],
    threshold: int = DEFAULT_THRESHOLD,
    connectivity: Connectivity = DEFAULT_CONNECTIVITY,
    min_area: int = DEFAULT_MIN_AREA,
    workers: int | None = None,
) -> list[Sample]:
    """Pool several corpora into one, sorted by sample id."""
    if not sources:
        raise IngestionError("no datasets to ingest")
    names = [source.name for source in sources]
    duplicates = sorted({name for name in names if names.count(name) > 1})
    if duplicates:
        raise IngestionError(f"dataset names must be unique: {', '.join(duplicates)}")
    samples = []
    for source in sources:
        samples.extend(
            ingest(source.images, source.masks, source.name, threshold, connectivity, min_area, workers)
        )
    return sorted(samples, key=lambda sample: sample.sample_id)


def describe_corpus(samples: Sequence[Sample]) -> list[DatasetSummary]:
    by_dataset: dict[str, list[Sample]] = {}
    for sample in samples:
        by_dataset.setdefault(sample.dataset, []).append(sample)
    summaries = []
    for name in sorted(by_dataset):
        group = by_dataset[name]
        widths = [sample.width for sample in group]
        heights = [sample.height for sample in group]
        summaries.append(
            DatasetSummary(
                name=name,
                images=len(group),
                min_width=min(widths),
                max_width=max(widths),
                min_height=min(heights),
                max_height=max(heights),
                boxes=sum(len(sample.boxes) for sample in group),
                negatives=sum(sample.is_negative for sample in group),
            )
        )
    return summaries
