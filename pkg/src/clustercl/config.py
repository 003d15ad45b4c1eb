"""Experiment configuration.

One nested, strictly-validated config drives every command. Unknown keys are
rejected. Precedence when assembling a run: built-in defaults < config file
< explicit overrides (CLI flags / ``--set`` pairs).
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigError

DatasetName = Literal["uci_har", "usc_had", "motion_sense", "synthetic", "csv"]

# Conventional window lengths when the user does not pass one explicitly.
DEFAULT_WINDOW_LENGTH = {
    "uci_har": 128,
    "usc_had": 400,
    "motion_sense": 400,
    "synthetic": 64,
    "csv": 400,
}


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class SyntheticConfig(StrictModel):
    """Parameters of the built-in synthetic recording generator."""

    classes: int = Field(default=3, ge=2)
    subjects: int = Field(default=4, ge=1)
    trials: int = Field(default=10, ge=1, description="trials per (subject, class) pair")
    length: int = Field(default=640, ge=8, description="samples per recording")
    channels: int = Field(default=6, ge=1)
    sample_rate_hz: int = Field(default=50, ge=1)
    noise: float = Field(default=0.1, ge=0.0)


class DataConfig(StrictModel):
    dataset: DatasetName = "synthetic"
    root: Optional[str] = None
    window_length: Optional[int] = Field(default=None, ge=1)
    overlap: float = Field(default=0.5, ge=0.0, lt=1.0)
    val_subjects: Optional[list[str]] = None
    test_subjects: Optional[list[str]] = None
    val_fraction: float = Field(default=0.2, ge=0.0, lt=1.0)
    test_fraction: float = Field(default=0.2, ge=0.0, lt=1.0)
    normalize: bool = True
    synthetic: SyntheticConfig = SyntheticConfig()

    def resolved_window_length(self) -> int:
        return self.window_length or DEFAULT_WINDOW_LENGTH[self.dataset]


class AugConfig(StrictModel):
    factor_min: float = Field(default=0.7, gt=0.0)
    factor_max: float = Field(default=1.3, gt=0.0)
    symmetric_aug: bool = False

    @model_validator(mode="after")
    def _check_range(self) -> "AugConfig":
        if self.factor_min > self.factor_max:
            raise ValueError("aug.factor_min must be <= aug.factor_max")
        return self


class ModelConfig(StrictModel):
    conv_filters: list[int] = [32, 64, 96]
    kernel_sizes: list[int] = [24, 16, 8]
    dropout_rate: float = Field(default=0.1, ge=0.0, lt=1.0)
    projection_dims: list[int] = [96, 96, 96]

    @model_validator(mode="after")
    def _check_shapes(self) -> "ModelConfig":
        if len(self.conv_filters) != len(self.kernel_sizes):
            raise ValueError("model.conv_filters and model.kernel_sizes must have equal length")
        if not self.conv_filters or not self.projection_dims:
            raise ValueError("model.conv_filters and model.projection_dims must be nonempty")
        if any(f < 1 for f in self.conv_filters) or any(k < 1 for k in self.kernel_sizes):
            raise ValueError("model filters and kernel sizes must be positive")
        return self

    @property
    def encoder_dim(self) -> int:
        return self.conv_filters[-1]

    @property
    def projection_dim(self) -> int:
        return self.projection_dims[-1]


class DbscanConfig(StrictModel):
    eps: float = Field(default=0.5, gt=0.0)
    min_samples: int = Field(default=5, ge=1)


class BirchConfig(StrictModel):
    threshold: float = Field(default=0.5, gt=0.0)
    branching: int = Field(default=50, ge=2)


class HierConfig(StrictModel):
    linkage: Literal["average", "complete", "single", "ward"] = "average"


class ClusterConfig(StrictModel):
    method: Literal["kmeans", "birch", "hierarchical", "dbscan"] = "kmeans"
    metric: Literal["euclidean", "cosine"] = "euclidean"
    k: Optional[int] = Field(default=None, ge=1, description="defaults to the dataset class count")
    alpha: float = Field(default=100.0, ge=0.0, le=100.0)
    cluster_branch: Literal["per_anchor", "first_only"] = "per_anchor"
    dbscan: DbscanConfig = DbscanConfig()
    birch: BirchConfig = BirchConfig()
    hier: HierConfig = HierConfig()

    @model_validator(mode="after")
    def _check_linkage(self) -> "ClusterConfig":
        if self.method == "hierarchical" and self.metric == "cosine" and self.hier.linkage == "ward":
            raise ValueError("ward linkage requires the euclidean metric")
        return self


class LossConfig(StrictModel):
    variant: Literal["nt_xent", "cluster", "cluster_confidence"] = "cluster"
    temperature: float = Field(default=0.1, gt=0.0)
    large_num: float = Field(default=1e9, ge=1e6)


class PretrainConfig(StrictModel):
    lr: float = Field(default=1e-3, gt=0.0)
    batch_size: int = Field(default=1024, ge=2)
    epochs: int = Field(default=200, ge=1)
    checkpoint_interval: int = Field(default=0, ge=0, description="epochs between checkpoints; 0 = final only")
    num_threads: Optional[int] = Field(default=1, ge=1, description="torch threads; 1 keeps runs bit-stable")


class EvalConfig(StrictModel):
    mode: Literal["linear_eval", "fine_tune"] = "linear_eval"
    lr: Optional[float] = Field(default=None, gt=0.0, description="default 1e-1 linear / 1e-2 fine-tune")
    epochs: int = Field(default=200, ge=0)
    batch_size: Optional[int] = Field(default=None, ge=1, description="default by label budget: 50 at 1%, 500 otherwise")
    repeats: int = Field(default=10, ge=1)
    num_threads: Optional[int] = Field(default=1, ge=1)

    def resolved_lr(self) -> float:
        if self.lr is not None:
            return self.lr
        return 1e-1 if self.mode == "linear_eval" else 1e-2

    def resolved_batch_size(self, label_fraction: float) -> int:
        if self.batch_size is not None:
            return self.batch_size
        return 50 if label_fraction <= 0.01 else 500


class ExperimentConfig(StrictModel):
    run_id: str = "run"
    output_dir: Optional[str] = None
    seed: int = 1234
    data: DataConfig = DataConfig()
    aug: AugConfig = AugConfig()
    model: ModelConfig = ModelConfig()
    cluster: ClusterConfig = ClusterConfig()
    loss: LossConfig = LossConfig()
    pretrain: PretrainConfig = PretrainConfig()
    eval: EvalConfig = EvalConfig()

    def fingerprint(self) -> str:
        """Stable hash of the config content, recorded in every artifact."""
        payload = json.dumps(self.model_dump(mode="json"), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()[:16]


def load_config(path: str | Path | None, overrides: dict[str, Any] | None = None) -> ExperimentConfig:
    """Load a JSON config file and apply dotted-path overrides on top."""
    raw: dict[str, Any] = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        try:
            raw = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    for key, value in (overrides or {}).items():
        _set_dotted(raw, key, value)
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


def parse_override(pair: str) -> tuple[str, Any]:
    """Parse a ``section.key=value`` pair; values are JSON when possible."""
    if "=" not in pair:
        raise ConfigError(f"override must look like section.key=value, got {pair!r}")
    key, _, text = pair.partition("=")
    try:
        value: Any = json.loads(text)
    except json.JSONDecodeError:
        value = text
    return key.strip(), value


def _set_dotted(tree: dict[str, Any], dotted: str, value: Any) -> None:
    parts = dotted.split(".")
    node = tree
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot override {dotted}: {part} is not a section")
    node[parts[-1]] = value
