"""Axis-aligned boxes, binary masks, and mask-to-box conversion."""

import math
from dataclasses import dataclass, field
from typing import Final, Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import ndimage

from polygate.errors import GeometryError

DEFAULT_THRESHOLD: Final[int] = 128
DEFAULT_CONNECTIVITY: Final = 8
DEFAULT_MIN_AREA: Final[int] = 64
# Slack for boxes that touch an image edge after 6-decimal quantization.
EDGE_SLACK: Final[float] = 1e-6

Connectivity = Literal[4, 8]


@dataclass(frozen=True)
class BBox:
    """Pixel box ``[x_min, x_max) × [y_min, y_max)`` in image coordinates, y pointing down."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self) -> None:
        coords = (self.x_min, self.y_min, self.x_max, self.y_max)
        if not all(math.isfinite(value) for value in coords):
            raise GeometryError(f"box coordinates must be finite: {coords}")
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise GeometryError(f"box must have positive width and height: {coords}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x_min + self.x_max) / 2, (self.y_min + self.y_max) / 2)

    def translated(self, dx: float, dy: float) -> "BBox":
        return BBox(self.x_min + dx, self.y_min + dy, self.x_max + dx, self.y_max + dy)

    def scaled(self, factor: float) -> "BBox":
        return BBox(
            self.x_min * factor, self.y_min * factor, self.x_max * factor, self.y_max * factor
        )

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)


@dataclass(frozen=True)
class NormBox:
    """Center-form box normalized by image width and height (YOLO label convention)."""

    class_id: int
    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self) -> None:
        if isinstance(self.class_id, bool) or not isinstance(self.class_id, int):
            raise GeometryError(f"class id must be an integer: {self.class_id!r}")
        if self.class_id < 0:
            raise GeometryError(f"class id must be non-negative: {self.class_id}")
        values = (self.cx, self.cy, self.w, self.h)
        if not all(math.isfinite(value) for value in values):
            raise GeometryError(f"normalized box values must be finite: {values}")
        if not (0.0 <= self.cx <= 1.0 and 0.0 <= self.cy <= 1.0):
            raise GeometryError(f"box center outside [0, 1]: ({self.cx}, {self.cy})")
        if not (0.0 < self.w <= 1.0 and 0.0 < self.h <= 1.0):
            raise GeometryError(f"box size outside (0, 1]: ({self.w}, {self.h})")
        for center, size, axis in ((self.cx, self.w, "x"), (self.cy, self.h, "y")):
            if center - size / 2 < -EDGE_SLACK or center + size / 2 > 1.0 + EDGE_SLACK:
                raise GeometryError(f"box extends outside the image along {axis}")


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """Row-major boolean grid of shape ``(height, width)``."""

    bits: NDArray[np.bool_]

    def __post_init__(self) -> None:
        bits = np.array(self.bits, dtype=bool)
        if bits.ndim != 2 or bits.shape[0] == 0 or bits.shape[1] == 0:
            raise GeometryError(f"mask must be a non-empty 2-D grid, got shape {bits.shape}")
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @property
    def height(self) -> int:
        return int(self.bits.shape[0])

    @property
    def width(self) -> int:
        return int(self.bits.shape[1])

    @property
    def count(self) -> int:
        return int(self.bits.sum())


@dataclass(frozen=True, eq=False)
class Component:
    """One connected set of mask pixels with its tight inclusive pixel bounds."""

    ys: NDArray[np.intp] = field(repr=False)
    xs: NDArray[np.intp] = field(repr=False)
    min_x: int
    min_y: int
    max_x: int
    max_y: int

    @property
    def size(self) -> int:
        return len(self.ys)

    def pixels(self) -> set[tuple[int, int]]:
        """Return the component as ``{(y, x), ...}``."""
        return set(zip(self.ys.tolist(), self.xs.tolist(), strict=True))


@dataclass(frozen=True)
class MaskBoxes:
    boxes: list[BBox]
    dropped: int


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes using continuous areas."""
    inter_w = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    inter_h = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if inter_w <= 0 or inter_h <= 0:
        return 0.0
    inter = inter_w * inter_h
    return inter / (a.area + b.area - inter)


def binarize(image: ArrayLike, threshold: float = DEFAULT_THRESHOLD) -> BinaryMask:
    """Set a bit wherever the grayscale intensity reaches ``threshold``."""
    if not 0 <= threshold <= 255:
        raise GeometryError(f"threshold must lie in [0, 255], got {threshold}")
    pixels = np.asarray(image)
    if pixels.size == 0:
        raise GeometryError("cannot binarize an empty image")
    if pixels.ndim != 2:
        raise GeometryError(f"expected a grayscale raster, got shape {pixels.shape}")
    return BinaryMask(pixels >= threshold)


def connected_components(
    mask: BinaryMask, connectivity: Connectivity = DEFAULT_CONNECTIVITY
) -> list[Component]:
    """Label maximal connected pixel sets, ordered by ``(min_y, min_x)``."""
    if connectivity not in (4, 8):
        raise GeometryError(f"connectivity must be 4 or 8, got {connectivity}")
    structure = ndimage.generate_binary_structure(2, 1 if connectivity == 4 else 2)
    labels, _ = ndimage.label(mask.bits, structure=structure)

    components: list[tuple[tuple[int, int, int], Component]] = []
    for label, region in enumerate(ndimage.find_objects(labels), start=1):
        if region is None:
            continue
        rows, cols = region
        local_ys, local_xs = np.nonzero(labels[region] == label)
        ys = local_ys + rows.start
        xs = local_xs + cols.start
        component = Component(
            ys=ys,
            xs=xs,
            min_x=int(xs.min()),
            min_y=int(ys.min()),
            max_x=int(xs.max()),
            max_y=int(ys.max()),
        )
        components.append(((component.min_y, component.min_x, label), component))

    components.sort(key=lambda item: item[0])
    return [component for _, component in components]


def components_to_boxes(
    components: list[Component], min_area: int = DEFAULT_MIN_AREA
) -> list[BBox]:
    """Half-open pixel-tight box per component; components under ``min_area`` pixels are dropped."""
    return [
        BBox(component.min_x, component.min_y, component.max_x + 1, component.max_y + 1)
        for component in components
        if component.size >= min_area
    ]


def mask_to_boxes(
    mask: BinaryMask,
    connectivity: Connectivity = DEFAULT_CONNECTIVITY,
    min_area: int = DEFAULT_MIN_AREA,
) -> MaskBoxes:
    components = connected_components(mask, connectivity)
    boxes = components_to_boxes(components, min_area)
    return MaskBoxes(boxes=boxes, dropped=len(components) - len(boxes))


def to_norm(box: BBox, img_w: float, img_h: float, class_id: int = 0) -> NormBox:
    if img_w <= 0 or img_h <= 0:
        raise GeometryError(f"image size must be positive, got {img_w}×{img_h}")
    if box.x_min < 0 or box.y_min < 0 or box.x_max > img_w or box.y_max > img_h:
        raise GeometryError(f"box {box.as_tuple()} exceeds image bounds {img_w}×{img_h}")
    cx, cy = box.center
    return NormBox(
        class_id=class_id,
        cx=cx / img_w,
        cy=cy / img_h,
        w=box.width / img_w,
        h=box.height / img_h,
    )


def from_norm(box: NormBox, img_w: float, img_h: float) -> BBox:
    if img_w <= 0 or img_h <= 0:
        raise GeometryError(f"image size must be positive, got {img_w}×{img_h}")
    half_w = box.w / 2
    half_h = box.h / 2
    return BBox(
        (box.cx - half_w) * img_w,
        (box.cy - half_h) * img_h,
        (box.cx + half_w) * img_w,
        (box.cy + half_h) * img_h,
    )
