"""Local Outlier Factor over per-image feature vectors.

Distances are exact Euclidean distances over the whole dataset. Neighbor sets keep
every point tied with the k-th distance, so a set can hold more than ``k`` members.
Points are processed in ascending ``sample_id`` order, which makes every score
independent of the order the caller supplied them in.
"""

import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Final

import numpy as np
from numpy.typing import ArrayLike, NDArray
from PIL import Image, UnidentifiedImageError
from scipy.spatial.distance import cdist

from polygate.errors import InputError, OutlierError

DEFAULT_K: Final[int] = 30
DEFAULT_CONTAMINATION: Final[float] = 0.05
DEFAULT_FEATURE_SIDE: Final[int] = 32
MIN_MEAN_REACH: Final[float] = 1e-12
MIN_STDEV: Final[float] = 1e-12
LUMA_WEIGHTS: Final = np.array([0.299, 0.587, 0.114])
_GRAY_MODES = {"L", "I", "I;16", "I;16B", "I;16L", "F"}


@dataclass(frozen=True, eq=False)
class FeatureVector:
    sample_id: str
    values: NDArray[np.float64] = field(repr=False)

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size == 0:
            raise OutlierError(f"feature vector for {self.sample_id!r} must be 1-D and non-empty")
        if not np.isfinite(values).all():
            raise OutlierError(f"feature vector for {self.sample_id!r} has non-finite values")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class NeighborSet:
    """Neighbors of one point, nearest first; ties are ordered by sample id."""

    neighbor_ids: tuple[str, ...]
    distances: tuple[float, ...]
    k_distance: float

    def __len__(self) -> int:
        return len(self.neighbor_ids)


class NeighborGraph:
    """Exact k-nearest-neighbor structure over one dataset."""

    def __init__(self, ids: list[str], distances: NDArray[np.float64], k: int):
        self.ids = ids
        self.k = k
        self.distances = distances
        self._index = {sample_id: position for position, sample_id in enumerate(ids)}

        n = len(ids)
        self.members: list[NDArray[np.intp]] = []
        k_distances = np.empty(n)
        ranks = np.arange(n)
        for i in range(n):
            row = distances[i].copy()
            row[i] = np.inf
            order = np.lexsort((ranks, row))
            sorted_row = row[order]
            k_distances[i] = sorted_row[k - 1]
            count = int(np.searchsorted(sorted_row, k_distances[i], side="right"))
            self.members.append(order[:count])
        self.k_distances = k_distances

    def __len__(self) -> int:
        return len(self.ids)

    def index_of(self, sample_id: str) -> int:
        try:
            return self._index[sample_id]
        except KeyError:
            raise OutlierError(f"unknown sample id: {sample_id!r}") from None

    def neighbor_set(self, sample_id: str) -> NeighborSet:
        i = self.index_of(sample_id)
        members = self.members[i]
        return NeighborSet(
            neighbor_ids=tuple(self.ids[j] for j in members),
            distances=tuple(float(value) for value in self.distances[i, members]),
            k_distance=float(self.k_distances[i]),
        )

    def distance(self, p_id: str, s_id: str) -> float:
        return float(self.distances[self.index_of(p_id), self.index_of(s_id)])

    def k_distance(self, sample_id: str) -> float:
        return float(self.k_distances[self.index_of(sample_id)])

    def reach_distances(self, i: int) -> NDArray[np.float64]:
        members = self.members[i]
        return np.maximum(self.k_distances[members], self.distances[i, members])


@dataclass(frozen=True)
class LofScores:
    """Per-sample scores aligned with ``ids`` (ascending sample id)."""

    ids: tuple[str, ...]
    scores: tuple[float, ...]
    lrds: tuple[float, ...]
    neighbor_counts: tuple[int, ...]

    def score_of(self, sample_id: str) -> float:
        return self.scores[self.ids.index(sample_id)]

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.ids, self.scores, strict=True))

    def ranked(self) -> list[tuple[str, float]]:
        """Highest score first; equal scores by ascending sample id."""
        return sorted(zip(self.ids, self.scores, strict=True), key=lambda item: (-item[1], item[0]))


@dataclass(frozen=True)
class LofResult:
    scores: LofScores
    contamination: float
    kept_ids: tuple[str, ...]
    removed: tuple[tuple[str, float], ...]

    @property
    def removed_ids(self) -> tuple[str, ...]:
        return tuple(sample_id for sample_id, _ in self.removed)


def load_luminance(path: Path) -> NDArray[np.float64]:
    """Decode an image file into a 2-D luminance array."""
    try:
        with Image.open(path) as image:
            image.load()
            if image.mode in _GRAY_MODES:
                return np.asarray(image, dtype=np.float64)
            rgb = np.asarray(image.convert("RGB"), dtype=np.float64)
    except (OSError, UnidentifiedImageError, ValueError) as error:
        raise InputError(f"cannot read image {path}: {error}") from error
    return rgb @ LUMA_WEIGHTS


def _area_weights(size: int, side: int) -> NDArray[np.float64]:
    """Row ``i`` holds the share of each source pixel inside output cell ``i``."""
    scale = size / side
    edges = np.arange(side + 1) * scale
    pixels = np.arange(size)
    lower = np.maximum(edges[:-1, None], pixels[None, :])
    upper = np.minimum(edges[1:, None], pixels[None, :] + 1)
    return np.clip(upper - lower, 0.0, None) / scale


def area_resample(array: ArrayLike, side: int) -> NDArray[np.float64]:
    """Resample a 2-D raster to ``side × side`` by exact area averaging."""
    pixels = np.asarray(array, dtype=np.float64)
    if pixels.ndim != 2 or pixels.size == 0:
        raise OutlierError(f"expected a non-empty 2-D raster, got shape {pixels.shape}")
    if side < 2:
        raise OutlierError(f"feature side must be at least 2, got {side}")
    height, width = pixels.shape
    return _area_weights(height, side) @ pixels @ _area_weights(width, side).T


def extract_features(
    sample_id: str, image: ArrayLike | Path, side: int = DEFAULT_FEATURE_SIDE
) -> FeatureVector:
    """Luminance resampled to ``side × side`` and flattened row-major (not yet standardized)."""
    if isinstance(image, (str, Path)):
        pixels = load_luminance(Path(image))
    else:
        pixels = np.asarray(image, dtype=np.float64)
        if pixels.ndim == 3 and pixels.shape[2] in (3, 4):
            pixels = pixels[:, :, :3] @ LUMA_WEIGHTS
    if pixels.size == 0:
        raise OutlierError(f"image for {sample_id!r} is empty")
    return FeatureVector(sample_id, area_resample(pixels, side).ravel())


def standardize(vectors: Sequence[FeatureVector]) -> list[FeatureVector]:
    """Z-score every dimension across the dataset; flat dimensions become 0."""
    if not vectors:
        return []
    lengths = {vector.values.size for vector in vectors}
    if len(lengths) != 1:
        raise OutlierError(f"feature vectors have differing lengths: {sorted(lengths)}")
    matrix = np.stack([vector.values for vector in vectors])
    mean = matrix.mean(axis=0)
    stdev = matrix.std(axis=0)
    flat = stdev < MIN_STDEV
    scaled = (matrix - mean) / np.where(flat, 1.0, stdev)
    scaled[:, flat] = 0.0
    return [FeatureVector(vector.sample_id, row) for vector, row in zip(vectors, scaled, strict=True)]


def featurize(
    paths: Mapping[str, Path], side: int = DEFAULT_FEATURE_SIDE
) -> list[FeatureVector]:
    """Load, resample, and standardize a sample set, ordered by sample id."""
    raw = [extract_features(sample_id, paths[sample_id], side) for sample_id in sorted(paths)]
    return standardize(raw)


def knn(points: Sequence[FeatureVector], k: int) -> NeighborGraph:
    if k < 1:
        raise OutlierError(f"k must be at least 1, got {k}")
    n = len(points)
    if n <= k:
        raise OutlierError(
            f"LOF needs more than k samples: got {n} samples with k={k}; use a smaller k"
        )
    ordered = sorted(points, key=lambda point: point.sample_id)
    ids = [point.sample_id for point in ordered]
    if len(set(ids)) != n:
        raise OutlierError("sample ids must be unique")
    lengths = {point.values.size for point in ordered}
    if len(lengths) != 1:
        raise OutlierError(f"feature vectors have differing lengths: {sorted(lengths)}")
    matrix = np.stack([point.values for point in ordered])
    return NeighborGraph(ids, cdist(matrix, matrix, metric="euclidean"), k)


def reach_dist(p_id: str, s_id: str, neighbors: NeighborGraph) -> float:
    """``max(k_distance(s), d(p, s))``."""
    return max(neighbors.k_distance(s_id), neighbors.distance(p_id, s_id))


def _lrd_at(neighbors: NeighborGraph, i: int) -> float:
    reach = neighbors.reach_distances(i)
    mean = float(reach.sum()) / len(reach)
    return 1.0 / max(mean, MIN_MEAN_REACH)


def lrd(p_id: str, neighbors: NeighborGraph) -> float:
    """Inverse mean reachability distance from ``p`` to its neighbor set."""
    return _lrd_at(neighbors, neighbors.index_of(p_id))


def scores_from_graph(neighbors: NeighborGraph) -> LofScores:
    lrds = np.array([_lrd_at(neighbors, i) for i in range(len(neighbors))])
    scores = []
    for i, members in enumerate(neighbors.members):
        ratios = lrds[members] / lrds[i]
        scores.append(float(ratios.sum()) / len(members))
    return LofScores(
        ids=tuple(neighbors.ids),
        scores=tuple(scores),
        lrds=tuple(float(value) for value in lrds),
        neighbor_counts=tuple(len(members) for members in neighbors.members),
    )


def lof_scores(points: Sequence[FeatureVector], k: int = DEFAULT_K) -> LofScores:
    return scores_from_graph(knn(points, k))


def removal_count(n: int, contamination: float) -> int:
    return math.floor(contamination * n + 1e-9)


def filter_outliers(scores: LofScores, contamination: float = DEFAULT_CONTAMINATION) -> LofResult:
    """Remove the ``floor(contamination × n)`` highest-scoring samples."""
    if not 0.0 <= contamination < 1.0:
        raise OutlierError(f"contamination must lie in [0, 1), got {contamination}")
    ranked = scores.ranked()
    cut = removal_count(len(ranked), contamination)
    removed = tuple(ranked[:cut])
    kept = tuple(sorted(sample_id for sample_id, _ in ranked[cut:]))
    return LofResult(scores=scores, contamination=contamination, kept_ids=kept, removed=removed)


def detect_outliers(
    points: Sequence[FeatureVector],
    k: int = DEFAULT_K,
    contamination: float = DEFAULT_CONTAMINATION,
) -> LofResult:
    return filter_outliers(lof_scores(points, k), contamination)
