"""Pytest configuration and fixtures."""

import os
from collections.abc import Callable, Mapping, Sequence
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

# Wide enough that rich never wraps the paths printed in panels.
os.environ["COLUMNS"] = "240"

Rect = tuple[int, int, int, int]
CorpusWriter = Callable[[str, Mapping[str, tuple[np.ndarray, np.ndarray]]], tuple[Path, Path]]


def rect_mask(height: int, width: int, rects: Sequence[Rect]) -> np.ndarray:
    """A 0/255 mask with each ``(x_min, y_min, x_max, y_max)`` half-open rectangle filled."""
    mask = np.zeros((height, width), dtype=np.uint8)
    for x_min, y_min, x_max, y_max in rects:
        mask[y_min:y_max, x_min:x_max] = 255
    return mask


def gray_frame(height: int, width: int, level: int = 128) -> np.ndarray:
    return np.full((height, width, 3), level, dtype=np.uint8)


@pytest.fixture(autouse=True)
def isolated_environment(monkeypatch: pytest.MonkeyPatch, tmp_path: Path) -> None:
    """Keep the user's config file and POLYGATE_* variables out of every test."""
    monkeypatch.setenv("HOME", str(tmp_path / "home"))
    for key in list(os.environ):
        if key.startswith("POLYGATE_"):
            monkeypatch.delenv(key)


@pytest.fixture
def corpus_writer(tmp_path: Path) -> CorpusWriter:
    """Write ``{stem: (image, mask)}`` as PNG files under ``<tmp>/<name>/{images,masks}``."""

    def write(name: str, frames: Mapping[str, tuple[np.ndarray, np.ndarray]]) -> tuple[Path, Path]:
        images = tmp_path / name / "images"
        masks = tmp_path / name / "masks"
        images.mkdir(parents=True, exist_ok=True)
        masks.mkdir(parents=True, exist_ok=True)
        for stem, (image, mask) in frames.items():
            Image.fromarray(image).save(images / f"{stem}.png")
            Image.fromarray(mask).save(masks / f"{stem}.png")
        return images, masks

    return write


@pytest.fixture
def three_image_corpus(corpus_writer: CorpusWriter) -> tuple[Path, Path]:
    """64×48 frames whose masks hold one, two, and zero polyps."""
    height, width = 48, 64
    return corpus_writer(
        "polyp",
        {
            "a": (gray_frame(height, width), rect_mask(height, width, [(10, 8, 20, 18)])),
            "b": (
                gray_frame(height, width, 90),
                rect_mask(height, width, [(4, 4, 14, 14), (40, 30, 56, 40)]),
            ),
            "c": (gray_frame(height, width, 200), rect_mask(height, width, [])),
        },
    )


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240917)
