"""Tests for split manifests."""

import json

import pytest

from polygate.dataset.split import (
    PRNG_NAME,
    FoldSplit,
    Removal,
    SplitManifest,
    attach_removals,
    block_bounds,
    fold_val_size,
    kfold_split,
    load_manifest,
    manifest_from_dict,
    manifest_to_dict,
    validate_manifest,
)
from polygate.errors import InputError, InvariantViolation, SplitError
from polygate.utils.artifacts import dump_json

GOLDEN_MANIFEST = """\
{
  "seed": 7,
  "prng": "numpy.PCG64",
  "fractions": {
    "test": 0.5,
    "val": 0.25
  },
  "folds": [
    {
      "fold": 0,
      "train": [
        "d/c"
      ],
      "val": [
        "d/b"
      ],
      "test": [
        "d/a",
        "d/d"
      ],
      "removed": [
        {
          "id": "d/c",
          "score": 1.5
        }
      ]
    }
  ]
}
"""


def corpus_ids(n: int, dataset: str = "d") -> list[str]:
    return [f"{dataset}/{i:04d}" for i in range(n)]


@pytest.fixture(scope="module")
def large_manifest() -> SplitManifest:
    return kfold_split(corpus_ids(2248))


class TestKfoldSplit:
    """Tests for kfold_split."""

    def test_default_sizes(self, large_manifest):
        assert large_manifest.fold_count == 5
        assert [len(fold.test) for fold in large_manifest.folds] == [450, 449, 450, 449, 450]
        assert [len(fold.val) for fold in large_manifest.folds] == [337, 338, 337, 338, 337]
        assert {len(fold.train) for fold in large_manifest.folds} == {1461}
        assert large_manifest.prng == PRNG_NAME

    def test_test_partitions_cover_the_corpus(self, large_manifest):
        tested = [sample_id for fold in large_manifest.folds for sample_id in fold.test]
        assert sorted(tested) == corpus_ids(2248)

    def test_each_fold_partitions_the_corpus(self, large_manifest):
        for fold in large_manifest.folds:
            train, val, test = set(fold.train), set(fold.val), set(fold.test)
            assert not (train & val or train & test or val & test)
            assert sorted(train | val | test) == corpus_ids(2248)
            assert list(fold.train) == sorted(fold.train)

    def test_same_seed_same_manifest(self):
        ids = corpus_ids(57)
        assert kfold_split(ids, seed=3) == kfold_split(list(reversed(ids)), seed=3)
        assert kfold_split(ids, seed=3) != kfold_split(ids, seed=4)

    @pytest.mark.parametrize(("n", "folds"), [(10, 10), (10, 5), (10, 3), (57, 2), (101, 5), (101, 4)])
    def test_sizes_stay_near_targets(self, n, folds):
        manifest = kfold_split(corpus_ids(n), folds=folds, test=1 / folds, val=0.1)
        tested = []
        for fold in manifest.folds:
            assert abs(len(fold.test) - n / folds) < 1
            assert abs(len(fold.val) - 0.1 * n) < 1
            assert len(fold.train) >= 1
            tested.extend(fold.test)
        assert sorted(tested) == corpus_ids(n)

    @pytest.mark.parametrize("n", [10, 100, 2248])
    @pytest.mark.parametrize("seed", [0, 1, 7, 42, 2024])
    def test_invariants_across_sizes_and_seeds(self, n, seed):
        manifest = kfold_split(corpus_ids(n), seed=seed)
        validate_manifest(manifest)
        assert dump_json(manifest_to_dict(manifest)) == dump_json(
            manifest_to_dict(kfold_split(corpus_ids(n), seed=seed))
        )
        tested = sorted(sample_id for fold in manifest.folds for sample_id in fold.test)
        assert tested == corpus_ids(n)

    def test_short_test_block_gets_a_larger_val_share(self):
        manifest = kfold_split(corpus_ids(29))
        sizes = [(len(f.train), len(f.val), len(f.test)) for f in manifest.folds]
        assert sizes == [(19, 4, 6), (19, 4, 6), (19, 5, 5), (19, 4, 6), (19, 4, 6)]

    @pytest.mark.slow
    def test_every_size_stays_within_one_of_target(self):
        for n in range(10, 1201):
            manifest = kfold_split(corpus_ids(n))
            for fold in manifest.folds:
                assert abs(len(fold.test) - 0.2 * n) < 1, n
                assert abs(len(fold.val) - 0.15 * n) < 1, n
                assert abs(len(fold.train) - 0.65 * n) < 1, n

    @pytest.mark.parametrize(("test_size", "expected"), [(450, 337), (449, 338), (6, 4), (5, 5)])
    def test_fold_val_size(self, test_size, expected):
        n = 2248 if test_size > 100 else 29
        assert fold_val_size(n, test_size, 0.2, 0.15) == expected

    def test_partial_test_coverage(self):
        manifest = kfold_split(corpus_ids(100), folds=3, test=0.2, val=0.1)
        tested = [sample_id for fold in manifest.folds for sample_id in fold.test]
        assert len(tested) == len(set(tested)) == 60

    def test_block_bounds(self):
        assert block_bounds(2248, 5, 0.2) == [0, 450, 899, 1349, 1798, 2248]
        assert block_bounds(100, 3, 0.2) == [0, 20, 40, 60]

    @pytest.mark.parametrize(
        ("n", "kwargs", "message"),
        [
            (3, {"folds": 5}, "too small"),
            (10, {"folds": 0}, "positive"),
            (10, {"test": 0.0}, "lie in"),
            (10, {"test": 0.6, "val": 0.4}, "no training"),
            (10, {"folds": 6, "test": 0.2}, "exceed"),
            (10, {"seed": -1}, "non-negative"),
            (5, {"folds": 2, "test": 0.05}, "without test samples"),
            (5, {"folds": 5, "test": 0.2, "val": 0.75}, "without training samples"),
        ],
    )
    def test_invalid_requests(self, n, kwargs, message):
        with pytest.raises(SplitError, match=message):
            kfold_split(corpus_ids(n), **kwargs)

    def test_duplicate_ids(self):
        with pytest.raises(SplitError, match="unique"):
            kfold_split(["d/a", "d/a", "d/b", "d/c", "d/e"], folds=2, test=0.5, val=0.2)


class TestRemovals:
    """Tests for attach_removals and fold exports."""

    def test_removals_shrink_training_exports(self, large_manifest):
        fold = large_manifest.fold(0)
        removed = [Removal(sample_id, 10.0 - i * 0.01) for i, sample_id in enumerate(fold.train[:89])]
        manifest = attach_removals(large_manifest, 0, removed)

        exported = manifest.export(0, "train") + manifest.export(0, "val")
        assert len(exported) == 1709
        assert not set(exported) & manifest.fold(0).removed_ids
        assert manifest.export(0, "test") == fold.test
        assert manifest.fold(1) == large_manifest.fold(1)
        validate_manifest(manifest)

    def test_ordered_by_score_then_id(self):
        manifest = kfold_split(corpus_ids(20), folds=2, test=0.5, val=0.2)
        train = manifest.fold(0).train
        updated = attach_removals(manifest, 0, [(train[2], 1.0), (train[1], 3.0), (train[0], 1.0)])
        assert [r.sample_id for r in updated.fold(0).removed] == [train[1], train[0], train[2]]

    def test_attaching_again_replaces(self):
        manifest = kfold_split(corpus_ids(20), folds=2, test=0.5, val=0.2)
        train = manifest.fold(0).train
        once = attach_removals(manifest, 0, [(train[0], 2.0)])
        twice = attach_removals(once, 0, [(train[1], 2.5)])
        assert twice.fold(0).removed == (Removal(train[1], 2.5),)
        assert attach_removals(twice, 0, []) == manifest

    def test_rejected_removals(self):
        manifest = kfold_split(corpus_ids(20), folds=2, test=0.5, val=0.2)
        fold = manifest.fold(0)
        with pytest.raises(SplitError, match="test partition"):
            attach_removals(manifest, 0, [(fold.test[0], 2.0)])
        with pytest.raises(SplitError, match="not a training"):
            attach_removals(manifest, 0, [("other/x", 2.0)])
        with pytest.raises(SplitError, match="twice"):
            attach_removals(manifest, 0, [(fold.train[0], 2.0), (fold.train[0], 1.0)])
        with pytest.raises(SplitError, match="finite"):
            attach_removals(manifest, 0, [(fold.train[0], float("nan"))])
        with pytest.raises(SplitError, match="out of range"):
            attach_removals(manifest, 2, [])


class TestManifestFiles:
    """Tests for manifest serialization and validation."""

    @pytest.fixture
    def tiny_manifest(self):
        return SplitManifest(
            seed=7,
            test_fraction=0.5,
            val_fraction=0.25,
            folds=(
                FoldSplit(
                    train=("d/c",),
                    val=("d/b",),
                    test=("d/a", "d/d"),
                    removed=(Removal("d/c", 1.5),),
                ),
            ),
        )

    def test_golden_bytes(self, tiny_manifest):
        validate_manifest(tiny_manifest)
        assert dump_json(manifest_to_dict(tiny_manifest)) == GOLDEN_MANIFEST

    def test_load_round_trip(self, tmp_path):
        manifest = attach_removals(
            kfold_split(corpus_ids(40), folds=4, test=0.25, val=0.15, seed=11),
            1,
            [],
        )
        path = tmp_path / "split.json"
        path.write_text(dump_json({"tool": {"name": "polygate"}, **manifest_to_dict(manifest)}))
        assert load_manifest(path) == manifest

    def test_missing_file(self, tmp_path):
        with pytest.raises(InputError, match="split manifest not found"):
            load_manifest(tmp_path / "split.json")

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "split.json"
        path.write_text("{not json")
        with pytest.raises(InputError, match="cannot read split manifest"):
            load_manifest(path)

    def test_not_an_object(self, tmp_path):
        path = tmp_path / "split.json"
        path.write_text("[]")
        with pytest.raises(InputError, match="not a JSON object"):
            load_manifest(path)

    def test_malformed_structure(self):
        with pytest.raises(InputError, match="malformed split manifest"):
            manifest_from_dict({"seed": 1, "folds": [{"train": []}]})

    def test_tampered_manifest(self, tiny_manifest):
        data = json.loads(dump_json(manifest_to_dict(tiny_manifest)))
        data["folds"][0]["train"] = ["d/b", "d/c"]
        with pytest.raises(InvariantViolation) as error:
            manifest_from_dict(data)
        assert "fold 0: train, val and test overlap" in error.value.details
        assert error.value.exit_code == 3

    def test_overlapping_test_sets(self):
        fold = FoldSplit(train=("d/c",), val=("d/b",), test=("d/a", "d/d"))
        manifest = SplitManifest(seed=0, test_fraction=0.5, val_fraction=0.25, folds=(fold, fold))
        with pytest.raises(InvariantViolation) as error:
            validate_manifest(manifest)
        assert "fold 1: test ids already tested in an earlier fold" in error.value.details
        assert "test partitions do not cover the corpus" in error.value.details

    def test_removed_test_id(self):
        fold = FoldSplit(
            train=("d/c",), val=("d/b",), test=("d/a", "d/d"), removed=(Removal("d/a", 2.0),)
        )
        manifest = SplitManifest(seed=0, test_fraction=0.5, val_fraction=0.25, folds=(fold,))
        with pytest.raises(InvariantViolation) as error:
            validate_manifest(manifest)
        assert error.value.details == ["fold 0: removed ids outside train/val: d/a"]
