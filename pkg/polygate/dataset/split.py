"""Rotating k-fold train/val/test manifests and the outlier removals recorded against them."""

import json
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Final, Literal

import numpy as np

from polygate.dataset.samples import Sample
from polygate.errors import InputError, InvariantViolation, SplitError

PRNG_NAME: Final[str] = "numpy.PCG64"
DEFAULT_FOLDS: Final[int] = 5
DEFAULT_TEST: Final[float] = 0.20
DEFAULT_VAL: Final[float] = 0.15
DEFAULT_SEED: Final[int] = 42
FRACTION_EPS: Final[float] = 1e-9

SplitName = Literal["train", "val", "test"]


@dataclass(frozen=True)
class Removal:
    sample_id: str
    score: float


@dataclass(frozen=True)
class FoldSplit:
    """Sorted id lists of one fold plus the removals recorded by outlier filtering."""

    train: tuple[str, ...]
    val: tuple[str, ...]
    test: tuple[str, ...]
    removed: tuple[Removal, ...] = ()

    @property
    def removed_ids(self) -> frozenset[str]:
        return frozenset(removal.sample_id for removal in self.removed)

    def export(self, split: SplitName) -> tuple[str, ...]:
        """Ids of ``split`` with removals excluded; the test list is never filtered."""
        if split == "test":
            return self.test
        removed = self.removed_ids
        return tuple(sample_id for sample_id in getattr(self, split) if sample_id not in removed)


@dataclass(frozen=True)
class SplitManifest:
    seed: int
    test_fraction: float
    val_fraction: float
    folds: tuple[FoldSplit, ...]
    prng: str = PRNG_NAME

    @property
    def fold_count(self) -> int:
        return len(self.folds)

    @property
    def sample_ids(self) -> tuple[str, ...]:
        first = self.folds[0]
        return tuple(sorted((*first.train, *first.val, *first.test)))

    def fold(self, index: int) -> FoldSplit:
        if not 0 <= index < len(self.folds):
            raise SplitError(f"fold {index} out of range; manifest has {len(self.folds)} folds")
        return self.folds[index]

    def export(self, fold: int, split: SplitName) -> tuple[str, ...]:
        return self.fold(fold).export(split)

    def with_fold(self, index: int, fold: FoldSplit) -> "SplitManifest":
        self.fold(index)
        folds = list(self.folds)
        folds[index] = fold
        return replace(self, folds=tuple(folds))


def _covers_corpus(test_fraction: float, folds: int) -> bool:
    return abs(test_fraction * folds - 1.0) <= FRACTION_EPS


def _sample_ids(samples: Sequence[Sample] | Sequence[str]) -> list[str]:
    return [sample if isinstance(sample, str) else sample.sample_id for sample in samples]


def block_bounds(n: int, folds: int, test: float) -> list[int]:
    """Start offsets of each test block in the shuffled order, plus the final end offset."""
    bounds = [math.floor(f * test * n + 0.5) for f in range(folds + 1)]
    if _covers_corpus(test, folds):
        bounds[-1] = n
    return bounds


def fold_val_size(n: int, test_size: int, test: float, val: float) -> int:
    """Validation size for a fold whose test block holds ``test_size`` ids.

    Half of the test block's rounding error is absorbed here so that validation
    and training both stay within one sample of their targets. Ties round up.
    """
    return math.floor(val * n + (test * n - test_size) / 2 + 0.5 + FRACTION_EPS)


def kfold_split(
    samples: Sequence[Sample] | Sequence[str],
    folds: int = DEFAULT_FOLDS,
    test: float = DEFAULT_TEST,
    val: float = DEFAULT_VAL,
    seed: int = DEFAULT_SEED,
) -> SplitManifest:
    """Shuffle the sorted ids once, cut them into contiguous test blocks, and rotate.

    Each fold's validation ids are taken from the shuffled order right after its
    test block (wrapping around), sized by :func:`fold_val_size`; the rest of the
    remainder is training data.
    """
    if folds < 1:
        raise SplitError(f"fold count must be positive, got {folds}")
    if not (0.0 < test < 1.0 and 0.0 < val < 1.0):
        raise SplitError(f"split fractions must lie in (0, 1): test={test}, val={val}")
    if test + val >= 1.0:
        raise SplitError(f"test and val fractions leave no training data: {test} + {val}")
    if test * folds > 1.0 + FRACTION_EPS:
        raise SplitError(f"{folds} test blocks of {test} exceed the corpus")
    if seed < 0:
        raise SplitError(f"seed must be non-negative, got {seed}")

    ids = sorted(_sample_ids(samples))
    n = len(ids)
    if len(set(ids)) != n:
        raise SplitError("sample ids must be unique")
    if n < folds:
        raise SplitError(f"corpus of {n} samples is too small for {folds} folds")

    rng = np.random.Generator(np.random.PCG64(seed))
    shuffled = [ids[i] for i in rng.permutation(n)]
    bounds = block_bounds(n, folds, test)

    fold_splits = []
    for f in range(folds):
        start, end = bounds[f], bounds[f + 1]
        if start == end:
            raise SplitError(f"corpus of {n} samples leaves fold {f} without test samples")
        remainder = shuffled[end:] + shuffled[:start]
        val_size = fold_val_size(n, end - start, test, val)
        if len(remainder) - val_size < 1:
            raise SplitError(f"corpus of {n} samples leaves fold {f} without training samples")
        fold_splits.append(
            FoldSplit(
                train=tuple(sorted(remainder[val_size:])),
                val=tuple(sorted(remainder[:val_size])),
                test=tuple(sorted(shuffled[start:end])),
            )
        )

    manifest = SplitManifest(
        seed=seed, test_fraction=test, val_fraction=val, folds=tuple(fold_splits)
    )
    validate_manifest(manifest)
    return manifest


def attach_removals(
    manifest: SplitManifest, fold: int, removed: Iterable[Removal | tuple[str, float]]
) -> SplitManifest:
    """Record outlier removals for one fold, replacing any recorded earlier."""
    split = manifest.fold(fold)
    train_val = set(split.train) | set(split.val)
    test = set(split.test)

    removals = [item if isinstance(item, Removal) else Removal(*item) for item in removed]
    seen: set[str] = set()
    for removal in removals:
        if removal.sample_id in test:
            raise SplitError(f"{removal.sample_id} is in the test partition of fold {fold}")
        if removal.sample_id not in train_val:
            raise SplitError(f"{removal.sample_id} is not a training or validation id of fold {fold}")
        if removal.sample_id in seen:
            raise SplitError(f"{removal.sample_id} is removed twice")
        if not math.isfinite(removal.score):
            raise SplitError(f"removal score for {removal.sample_id} is not finite")
        seen.add(removal.sample_id)

    ordered = tuple(sorted(removals, key=lambda removal: (-removal.score, removal.sample_id)))
    return manifest.with_fold(fold, replace(split, removed=ordered))


def validate_manifest(manifest: SplitManifest) -> None:
    """Raise :class:`InvariantViolation` listing every broken partition invariant."""
    problems: list[str] = []
    if not manifest.folds:
        raise InvariantViolation("manifest has no folds")

    corpus = set(manifest.sample_ids)
    n = len(corpus)
    tested: set[str] = set()
    for f, split in enumerate(manifest.folds):
        parts = {"train": split.train, "val": split.val, "test": split.test}
        for name, ids in parts.items():
            if len(set(ids)) != len(ids):
                problems.append(f"fold {f}: {name} has duplicate ids")
            if list(ids) != sorted(ids):
                problems.append(f"fold {f}: {name} ids are not sorted")
        train, val, test = (set(ids) for ids in parts.values())
        if train & val or train & test or val & test:
            problems.append(f"fold {f}: train, val and test overlap")
        if train | val | test != corpus:
            problems.append(f"fold {f}: partitions do not cover the corpus")
        if tested & test:
            problems.append(f"fold {f}: test ids already tested in an earlier fold")
        tested |= test
        if abs(len(test) - manifest.test_fraction * n) >= 1.0:
            problems.append(f"fold {f}: test size {len(test)} is off target")
        if abs(len(val) - manifest.val_fraction * n) >= 1.0:
            problems.append(f"fold {f}: val size {len(val)} is off target")
        train_target = (1.0 - manifest.test_fraction - manifest.val_fraction) * n
        if abs(len(train) - train_target) >= 1.0:
            problems.append(f"fold {f}: train size {len(train)} is off target")
        stray = split.removed_ids - (train | val)
        if stray:
            problems.append(f"fold {f}: removed ids outside train/val: {', '.join(sorted(stray))}")

    if _covers_corpus(manifest.test_fraction, manifest.fold_count) and tested != corpus:
        problems.append("test partitions do not cover the corpus")
    if problems:
        raise InvariantViolation("split manifest breaks its invariants", details=problems)


def manifest_to_dict(manifest: SplitManifest) -> dict[str, Any]:
    return {
        "seed": manifest.seed,
        "prng": manifest.prng,
        "fractions": {"test": manifest.test_fraction, "val": manifest.val_fraction},
        "folds": [
            {
                "fold": index,
                "train": list(split.train),
                "val": list(split.val),
                "test": list(split.test),
                "removed": [{"id": r.sample_id, "score": r.score} for r in split.removed],
            }
            for index, split in enumerate(manifest.folds)
        ],
    }


def manifest_from_dict(data: Mapping[str, Any]) -> SplitManifest:
    try:
        folds = tuple(
            FoldSplit(
                train=tuple(str(sample_id) for sample_id in fold["train"]),
                val=tuple(str(sample_id) for sample_id in fold["val"]),
                test=tuple(str(sample_id) for sample_id in fold["test"]),
                removed=tuple(
                    Removal(str(item["id"]), float(item["score"])) for item in fold.get("removed", [])
                ),
            )
            for fold in data["folds"]
        )
        manifest = SplitManifest(
            seed=int(data["seed"]),
            test_fraction=float(data["fractions"]["test"]),
            val_fraction=float(data["fractions"]["val"]),
            folds=folds,
            prng=str(data.get("prng", PRNG_NAME)),
        )
    except (KeyError, TypeError, ValueError, AttributeError) as error:
        raise InputError(f"malformed split manifest: {error!r}") from error
    validate_manifest(manifest)
    return manifest


def load_manifest(path: Path) -> SplitManifest:
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise InputError(f"split manifest not found: {path}") from None
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as error:
        raise InputError(f"cannot read split manifest {path}: {error}") from error
    if not isinstance(data, dict):
        raise InputError(f"split manifest {path} is not a JSON object")
    return manifest_from_dict(data)
