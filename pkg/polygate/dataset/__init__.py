"""Corpus ingestion, label/prediction files, and split manifests."""

from polygate.dataset.corpus import (
    CONVERSION_FILE,
    ground_truth,
    load_corpus,
    load_predictions,
    write_corpus,
)
from polygate.dataset.labels import (
    format_label_line,
    format_prediction_line,
    label_path,
    parse_labels,
    parse_predictions,
    write_labels,
)
from polygate.dataset.samples import (
    DatasetSummary,
    Sample,
    Source,
    describe_corpus,
    ingest,
    ingest_sources,
    load_sample,
)
from polygate.dataset.split import (
    FoldSplit,
    Removal,
    SplitManifest,
    attach_removals,
    kfold_split,
    load_manifest,
    manifest_from_dict,
    manifest_to_dict,
    validate_manifest,
)

__all__ = [
    "CONVERSION_FILE",
    "DatasetSummary",
    "FoldSplit",
    "Removal",
    "Sample",
    "Source",
    "SplitManifest",
    "attach_removals",
    "describe_corpus",
    "format_label_line",
    "format_prediction_line",
    "ground_truth",
    "ingest",
    "ingest_sources",
    "kfold_split",
    "label_path",
    "load_corpus",
    "load_manifest",
    "load_predictions",
    "load_sample",
    "manifest_from_dict",
    "manifest_to_dict",
    "parse_labels",
    "parse_predictions",
    "validate_manifest",
    "write_corpus",
    "write_labels",
]
