"""Tests for corpus ingestion and the converted label tree."""

import json

import numpy as np
import pytest
from PIL import Image

from polygate.dataset.corpus import (
    CONVERSION_FILE,
    ground_truth,
    load_corpus,
    load_predictions,
    write_corpus,
)
from polygate.dataset.samples import Source, describe_corpus, ingest, ingest_sources, load_sample
from polygate.errors import IngestionError, InputError
from polygate.geometry import NormBox
from tests.conftest import gray_frame, rect_mask

HEADER = {"tool": {"name": "polygate", "version": "test"}}


class TestIngest:
    """Tests for ingest and load_sample."""

    def test_three_image_corpus(self, three_image_corpus):
        images, masks = three_image_corpus
        samples = ingest(images, masks, "polyp")

        assert [sample.sample_id for sample in samples] == ["polyp/a", "polyp/b", "polyp/c"]
        assert all((sample.width, sample.height) == (64, 48) for sample in samples)
        assert samples[0].boxes == (NormBox(0, 15 / 64, 13 / 48, 10 / 64, 10 / 48),)
        assert samples[1].boxes == (
            NormBox(0, 9 / 64, 9 / 48, 10 / 64, 10 / 48),
            NormBox(0, 48 / 64, 35 / 48, 16 / 64, 10 / 48),
        )
        assert samples[2].is_negative
        assert samples[0].image_path == images / "a.png"
        assert samples[0].mask_path == masks / "a.png"

    def test_deterministic_across_runs_and_workers(self, three_image_corpus):
        images, masks = three_image_corpus
        assert ingest(images, masks, "polyp", workers=1) == ingest(images, masks, "polyp", workers=4)

    def test_small_components_are_dropped(self, corpus_writer):
        mask = rect_mask(32, 32, [(2, 2, 12, 12), (20, 20, 25, 25)])
        images, masks = corpus_writer("small", {"f": (gray_frame(32, 32), mask)})
        [sample] = ingest(images, masks, "small")
        assert len(sample.boxes) == 1
        assert sample.dropped == 1

    def test_box_touching_the_image_edge(self, corpus_writer):
        mask = rect_mask(48, 64, [(54, 38, 64, 48)])
        images, masks = corpus_writer("edge", {"f": (gray_frame(48, 64), mask)})
        [sample] = ingest(images, masks, "edge")
        [box] = sample.boxes
        assert box.cx + box.w / 2 == pytest.approx(1.0)
        assert box.cy + box.h / 2 == pytest.approx(1.0)

    def test_four_connectivity_splits_diagonal_blobs(self, corpus_writer):
        mask = rect_mask(40, 40, [(0, 0, 10, 10), (10, 10, 20, 20)])
        images, masks = corpus_writer("diag", {"f": (gray_frame(40, 40), mask)})
        assert len(ingest(images, masks, "diag", connectivity=8)[0].boxes) == 1
        assert len(ingest(images, masks, "diag", connectivity=4)[0].boxes) == 2

    def test_missing_directory(self, three_image_corpus, tmp_path):
        images, _ = three_image_corpus
        with pytest.raises(IngestionError, match="mask directory not found") as error:
            ingest(images, tmp_path / "nowhere", "polyp")
        assert error.value.exit_code == 2

    def test_no_images(self, tmp_path):
        (tmp_path / "images").mkdir()
        (tmp_path / "masks").mkdir()
        with pytest.raises(IngestionError, match="no images found"):
            ingest(tmp_path / "images", tmp_path / "masks", "empty")

    def test_every_failure_is_reported(self, three_image_corpus):
        images, masks = three_image_corpus
        (masks / "c.png").unlink()
        Image.fromarray(np.zeros((10, 10), dtype=np.uint8)).save(masks / "b.png")
        (images / "d.png").write_bytes(b"not a png")
        Image.fromarray(np.zeros((10, 10), dtype=np.uint8)).save(masks / "d.png")

        with pytest.raises(IngestionError, match="3 item") as error:
            ingest(images, masks, "polyp")

        details = "\n".join(error.value.details)
        assert "no mask named c" in details
        assert "mask is 10×10, image is 64×48" in details
        assert "unreadable image" in details

    def test_duplicate_stems(self, three_image_corpus):
        images, masks = three_image_corpus
        Image.fromarray(gray_frame(48, 64)).save(images / "a.jpg")
        with pytest.raises(IngestionError) as error:
            ingest(images, masks, "polyp")
        assert any("duplicate image stem" in detail for detail in error.value.details)

    @pytest.mark.parametrize("name", ["", "a/b", " padded"])
    def test_invalid_dataset_name(self, three_image_corpus, name):
        images, masks = three_image_corpus
        with pytest.raises(InputError, match="invalid dataset name"):
            ingest(images, masks, name)

    def test_load_sample_with_custom_threshold(self, corpus_writer):
        mask = np.zeros((20, 20), dtype=np.uint8)
        mask[2:12, 2:12] = 100
        images, masks = corpus_writer("dim", {"f": (gray_frame(20, 20), mask)})
        assert load_sample("dim/f", images / "f.png", masks / "f.png").is_negative
        sample = load_sample("dim/f", images / "f.png", masks / "f.png", threshold=100)
        assert len(sample.boxes) == 1


class TestPooling:
    """Tests for ingest_sources and describe_corpus."""

    def test_sources_are_pooled_and_sorted(self, three_image_corpus, corpus_writer):
        images, masks = three_image_corpus
        other_images, other_masks = corpus_writer(
            "cvc", {"z": (gray_frame(30, 20), rect_mask(30, 20, [(0, 0, 10, 10)]))}
        )
        samples = ingest_sources(
            [Source("polyp", images, masks), Source("cvc", other_images, other_masks)]
        )
        assert [sample.sample_id for sample in samples] == [
            "cvc/z",
            "polyp/a",
            "polyp/b",
            "polyp/c",
        ]

    def test_duplicate_dataset_names(self, three_image_corpus):
        images, masks = three_image_corpus
        with pytest.raises(IngestionError, match="unique"):
            ingest_sources([Source("polyp", images, masks), Source("polyp", images, masks)])

    def test_describe_corpus(self, three_image_corpus):
        [summary] = describe_corpus(ingest(*three_image_corpus, "polyp"))
        assert summary.to_dict() == {
            "name": "polyp",
            "images": 3,
            "width": [64, 64],
            "height": [48, 48],
            "boxes": 3,
            "negatives": 1,
        }


class TestCorpusOnDisk:
    """Tests for write_corpus, load_corpus and load_predictions."""

    def test_write_then_load(self, three_image_corpus, tmp_path):
        samples = ingest(*three_image_corpus, "polyp")
        labels = tmp_path / "labels"
        [report] = write_corpus(samples, labels, HEADER)

        assert report == labels / "polyp" / CONVERSION_FILE
        data = json.loads(report.read_text())
        assert data["tool"] == HEADER["tool"]
        assert data["dataset"] == "polyp"
        assert [record["id"] for record in data["samples"]] == ["polyp/a", "polyp/b", "polyp/c"]
        assert (labels / "polyp" / "c.txt").read_bytes() == b""

        loaded = load_corpus(labels)
        assert [sample.sample_id for sample in loaded] == [sample.sample_id for sample in samples]
        for original, restored in zip(samples, loaded, strict=True):
            assert (restored.width, restored.height) == (original.width, original.height)
            assert len(restored.boxes) == len(original.boxes)
            for a, b in zip(original.boxes, restored.boxes, strict=True):
                assert (b.cx, b.cy, b.w, b.h) == pytest.approx((a.cx, a.cy, a.w, a.h), abs=5e-7)

    def test_ground_truth_in_pixels(self, three_image_corpus):
        truth = ground_truth(ingest(*three_image_corpus, "polyp"))
        assert [g.image_id for g in truth] == ["polyp/a", "polyp/b", "polyp/b"]
        assert truth[0].box.as_tuple() == pytest.approx((10, 8, 20, 18))

    def test_missing_conversion(self, tmp_path):
        (tmp_path / "labels").mkdir()
        with pytest.raises(InputError, match="polygate convert"):
            load_corpus(tmp_path / "labels")

    def test_load_predictions(self, three_image_corpus, tmp_path):
        samples = ingest(*three_image_corpus, "polyp")
        predictions = tmp_path / "predictions"
        (predictions / "polyp").mkdir(parents=True)
        (predictions / "polyp" / "a.txt").write_text("0 0.234375 0.270833 0.156250 0.208333 0.8\n")
        (predictions / "polyp" / "stray.txt").write_text("")

        detections, unmatched = load_predictions(predictions, samples)

        [detection] = detections
        assert detection.image_id == "polyp/a"
        assert detection.box.as_tuple() == pytest.approx((10, 8, 20, 18), abs=1e-4)
        assert unmatched == [predictions / "polyp" / "stray.txt"]

    def test_missing_prediction_directory(self, three_image_corpus, tmp_path):
        samples = ingest(*three_image_corpus, "polyp")
        with pytest.raises(InputError, match="prediction directory not found"):
            load_predictions(tmp_path / "none", samples)
