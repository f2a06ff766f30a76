"""Fixtures and utilities for integration tests."""

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from tests.conftest import rect_mask

FRAME_SIDE = 32
GRAY_FRAMES = 48
BLACK_IDS = ("polyp/black00", "polyp/black01")


@dataclass(frozen=True)
class PolypCorpus:
    images: Path
    masks: Path
    sample_ids: tuple[str, ...]
    black_ids: tuple[str, ...] = BLACK_IDS


def _polyp_rect(index: int) -> tuple[int, int, int, int]:
    x = 2 + (index % 5) * 3
    y = 2 + (index // 5 % 5) * 3
    return (x, y, x + 10, y + 10)


@pytest.fixture
def polyp_corpus(tmp_path: Path, rng: np.random.Generator) -> PolypCorpus:
    """Forty-eight similar gradient frames plus two black frames, each with one 10×10 polyp mask."""
    images = tmp_path / "corpus" / "images"
    masks = tmp_path / "corpus" / "masks"
    images.mkdir(parents=True)
    masks.mkdir(parents=True)

    gradient = np.linspace(100, 140, FRAME_SIDE * FRAME_SIDE).reshape(FRAME_SIDE, FRAME_SIDE)
    frames = {}
    for i in range(GRAY_FRAMES):
        noisy = np.clip(gradient + rng.normal(0, 1.0, gradient.shape), 0, 255).astype(np.uint8)
        frames[f"gray{i:02d}"] = np.stack([noisy] * 3, axis=-1)
    for sample_id in BLACK_IDS:
        frames[sample_id.split("/")[1]] = np.zeros((FRAME_SIDE, FRAME_SIDE, 3), dtype=np.uint8)

    for index, (stem, frame) in enumerate(sorted(frames.items())):
        Image.fromarray(frame).save(images / f"{stem}.png")
        mask = rect_mask(FRAME_SIDE, FRAME_SIDE, [_polyp_rect(index)])
        Image.fromarray(mask).save(masks / f"{stem}.png")

    return PolypCorpus(
        images=images,
        masks=masks,
        sample_ids=tuple(sorted(f"polyp/{stem}" for stem in frames)),
    )
