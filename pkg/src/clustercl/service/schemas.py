"""Request/response models of the HTTP API.

Paths in requests refer to the service host's filesystem; the bundled CLI
assumes client and server share one (it runs the app in-process by default).
"""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field

from ..config import DatasetName, ExperimentConfig, SyntheticConfig


class StrictRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")


class PrepareDataRequest(StrictRequest):
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
    seed: int = 1234
    run_id: str = "prepare"
    output_dir: Optional[str] = None
    out: Optional[str] = Field(default=None, description="cache file path; default <output_dir>/<run_id>/windows.cache")


class PretrainRequest(StrictRequest):
    config: ExperimentConfig = ExperimentConfig()
    data: str = Field(description="dataset cache path")
    out: Optional[str] = Field(default=None, description="run directory; default <output_dir>/<run_id>")
    force: bool = False


class EvalRequest(StrictRequest):
    config: ExperimentConfig = ExperimentConfig()
    checkpoint: str
    data: str
    mode: Optional[Literal["linear_eval", "fine_tune"]] = None
    label_fraction: float = Field(default=1.0, gt=0.0, le=1.0)
    repeats: Optional[int] = Field(default=None, ge=1)
    out: Optional[str] = Field(default=None, description="metrics JSON path")


class EmbedRequest(StrictRequest):
    checkpoint: str
    data: str
    n: int = Field(default=1000, ge=1)
    split: Literal["train", "val", "test"] = "train"
    seed: int = 1234
    run_id: str = "embed"
    output_dir: Optional[str] = None
    out: Optional[str] = Field(default=None, description="CSV path")


class SweepRequest(StrictRequest):
    config: ExperimentConfig = ExperimentConfig()
    data: str
    grid: dict[str, list] = Field(default_factory=dict)
    label_fraction: float = Field(default=1.0, gt=0.0, le=1.0)
    out: Optional[str] = None


class JobInfo(BaseModel):
    id: str
    kind: str
    status: Literal["queued", "running", "succeeded", "failed"]
    created_at: str
    started_at: Optional[str] = None
    finished_at: Optional[str] = None
    result: Optional[dict] = None
    error: Optional[str] = None


class HealthResponse(BaseModel):
    status: str
    version: str
