import json
import os
from pathlib import Path
from typing import Any, cast

import jsonc
from pydantic import BaseModel, Field, field_validator, model_validator

from polygate.dataset.split import (
    DEFAULT_FOLDS,
    DEFAULT_SEED,
    DEFAULT_TEST,
    DEFAULT_VAL,
    FRACTION_EPS,
)
from polygate.evaluation import DEFAULT_IOU, DEFAULT_MAX_DET
from polygate.geometry import DEFAULT_CONNECTIVITY, DEFAULT_MIN_AREA, DEFAULT_THRESHOLD
from polygate.losses import LossWeights
from polygate.outlier import DEFAULT_CONTAMINATION, DEFAULT_FEATURE_SIDE, DEFAULT_K

ENV_PREFIX = "POLYGATE_"
PATH_FIELDS = ("images", "masks", "labels", "predictions", "output", "manifest")


def _parse_bool(value: Any) -> bool:
    if isinstance(value, bool):
        return value
    return str(value).strip().lower() in {"1", "true", "yes", "on"}


def _parse_path(value: Any) -> Path:
    return Path(os.path.expanduser(str(value)))


def load_config_from_file() -> dict[str, Any]:
    config_paths = [
        os.path.expanduser("~/.polygate/config.jsonc"),
        os.path.expanduser("~/.polygate/config.json"),
    ]
    config_path = next((path for path in config_paths if os.path.exists(path)), None)
    if config_path:
        with open(config_path) as f:
            try:
                return cast("dict[str, Any]", jsonc.load(f))
            except json.JSONDecodeError:
                print(f"Warning: Could not decode JSON from {config_path}")
                return {}
    return {}


class PipelineConfig(BaseModel):
    """Effective settings of one pipeline run."""

    images: Path | None = Field(default=None, description="Directory of colonoscopy frames")
    masks: Path | None = Field(default=None, description="Directory of segmentation masks")
    dataset: str | None = Field(default=None, description="Dataset name used as sample id prefix")
    labels: Path | None = Field(default=None, description="Root of the converted label tree")
    predictions: Path | None = Field(default=None, description="Root of the prediction tree")
    manifest: Path | None = Field(default=None, description="Split manifest file")
    output: Path | None = Field(default=None, description="Report or manifest to write")

    threshold: int = Field(default=DEFAULT_THRESHOLD, ge=0, le=255, description="Mask threshold")
    min_area: int = Field(default=DEFAULT_MIN_AREA, ge=1, description="Smallest kept component")
    connectivity: int = Field(default=DEFAULT_CONNECTIVITY, description="Pixel adjacency (4 or 8)")
    workers: int | None = Field(default=None, gt=0, description="Ingestion worker threads")

    feature_side: int = Field(default=DEFAULT_FEATURE_SIDE, ge=2, description="Feature raster side")
    k: int = Field(default=DEFAULT_K, gt=0, description="LOF neighbor count")
    contamination: float = Field(
        default=DEFAULT_CONTAMINATION, ge=0.0, lt=1.0, description="Fraction of samples removed"
    )

    folds: int = Field(default=DEFAULT_FOLDS, gt=0, description="Cross-validation folds")
    test: float = Field(default=DEFAULT_TEST, gt=0.0, lt=1.0, description="Test fraction")
    val: float = Field(default=DEFAULT_VAL, gt=0.0, lt=1.0, description="Validation fraction")
    seed: int = Field(default=DEFAULT_SEED, ge=0, description="Shuffle seed")

    iou: float = Field(default=DEFAULT_IOU, gt=0.0, lt=1.0, description="Matching IoU threshold")
    max_det: int = Field(default=DEFAULT_MAX_DET, gt=0, description="Detections kept per image")

    loss: LossWeights = Field(default_factory=LossWeights, description="Total loss weights")
    debug: bool = Field(default=False, description="Print intermediate diagnostics")

    @field_validator("connectivity")
    @classmethod
    def validate_connectivity(cls, value: int) -> int:
        if value not in (4, 8):
            raise ValueError("connectivity must be 4 or 8")
        return value

    @field_validator("dataset")
    @classmethod
    def validate_dataset(cls, value: str | None) -> str | None:
        if value is not None and (not value or "/" in value):
            raise ValueError("dataset name must be non-empty and must not contain '/'")
        return value

    @model_validator(mode="after")
    def validate_split_fractions(self) -> "PipelineConfig":
        if self.test + self.val >= 1.0:
            raise ValueError("test + val must leave a training share")
        if self.test * self.folds > 1.0 + FRACTION_EPS:
            raise ValueError("folds × test must not exceed 1")
        return self

    model_config = {"frozen": False, "validate_assignment": True}


def config_echo(config: PipelineConfig) -> dict[str, Any]:
    """JSON-safe dump of the settings that shape an artifact."""
    return config.model_dump(mode="json", exclude={"debug"})


def _resolve_config(
    arg_name: str, args: Any, file_config: dict[str, Any], default: Any, type_cast: Any = None
) -> Any:
    """Helper to resolve config values from args, env, or file."""
    env_key = f"{ENV_PREFIX}{arg_name.upper()}"
    file_key = arg_name.upper()
    args_val = getattr(args, arg_name, None)

    # Priority: Command-line Arguments > Environment Variables > Configuration File > Default
    value = args_val
    if value is None:
        value = os.getenv(env_key)
    if value is None:
        value = file_config.get(file_key)
    if value is None:
        value = default

    if value is None and default is None:
        return None

    if value is not None and type_cast:
        try:
            return type_cast(value)
        except (ValueError, TypeError):
            print(
                f"Warning: Could not cast config value '{value}' for '{arg_name}' to type {type_cast.__name__}. Using default."
            )
            return default
    return value


def get_pipeline_config(args: Any) -> PipelineConfig:
    file_config = load_config_from_file()
    defaults = PipelineConfig()

    def resolve(name: str, type_cast: Any = None) -> Any:
        return _resolve_config(name, args, file_config, getattr(defaults, name), type_cast)

    paths = {name: resolve(name, _parse_path) for name in PATH_FIELDS}
    loss = LossWeights(
        lambda_box=_resolve_config(
            "lambda_box", args, file_config, defaults.loss.lambda_box, float
        ),
        lambda_cls=_resolve_config(
            "lambda_cls", args, file_config, defaults.loss.lambda_cls, float
        ),
        lambda_dfl=_resolve_config(
            "lambda_dfl", args, file_config, defaults.loss.lambda_dfl, float
        ),
    )

    # Pydantic will automatically validate all fields when creating the instance
    return PipelineConfig(
        **paths,
        dataset=resolve("dataset", str),
        threshold=resolve("threshold", int),
        min_area=resolve("min_area", int),
        connectivity=resolve("connectivity", int),
        workers=resolve("workers", int),
        feature_side=resolve("feature_side", int),
        k=resolve("k", int),
        contamination=resolve("contamination", float),
        folds=resolve("folds", int),
        test=resolve("test", float),
        val=resolve("val", float),
        seed=resolve("seed", int),
        iou=resolve("iou", float),
        max_det=resolve("max_det", int),
        loss=loss,
        debug=resolve("debug", _parse_bool),
    )
