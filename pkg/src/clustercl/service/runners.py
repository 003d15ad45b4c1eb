"""Job bodies: glue between API requests and the core package."""

from __future__ import annotations

import json
import os
from pathlib import Path

from .. import training
from ..data import label_budget, load_dataset_cache, prepare_dataset
from ..errors import CheckpointExistsError
from ..seeding import derive_seed
from .schemas import EmbedRequest, EvalRequest, PrepareDataRequest, PretrainRequest, SweepRequest

DEFAULT_OUTPUT_DIR = "runs"
OUTPUT_DIR_ENV = "CLUSTERCL_OUTPUT_DIR"


def run_dir(output_dir: str | None, run_id: str) -> Path:
    root = output_dir or os.environ.get(OUTPUT_DIR_ENV) or DEFAULT_OUTPUT_DIR
    path = Path(root) / run_id
    path.mkdir(parents=True, exist_ok=True)
    return path


def run_prepare(req: PrepareDataRequest) -> dict:
    out = Path(req.out) if req.out else run_dir(req.output_dir, req.run_id) / "windows.cache"
    window_length = req.window_length
    if window_length is None:
        from ..config import DEFAULT_WINDOW_LENGTH

        window_length = DEFAULT_WINDOW_LENGTH[req.dataset]
    return prepare_dataset(
        dataset=req.dataset, root=req.root, window_length=window_length, overlap=req.overlap,
        val_subjects=req.val_subjects, test_subjects=req.test_subjects,
        val_fraction=req.val_fraction, test_fraction=req.test_fraction, seed=req.seed,
        normalize=req.normalize, synthetic=req.synthetic, out_path=out,
    )


def run_pretrain(req: PretrainRequest) -> dict:
    cfg = req.config
    out = Path(req.out) if req.out else run_dir(cfg.output_dir, cfg.run_id)
    checkpoint = out / "checkpoint.ckpt"
    if checkpoint.exists() and not req.force:
        raise CheckpointExistsError(f"{checkpoint} exists; pass force to overwrite")
    splits, _ = load_dataset_cache(req.data)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(
        json.dumps(cfg.model_dump(mode="json"), indent=2, sort_keys=True) + "\n")
    result = training.pretrain(splits.train, cfg, out)
    return {
        "checkpoint_path": str(result.checkpoint_path),
        "log_path": str(result.log_path),
        "final_loss": result.final_loss,
        "steps_per_epoch": result.steps_per_epoch,
        "epochs": result.epochs,
    }


def run_eval(req: EvalRequest) -> dict:
    cfg = req.config
    updates = {}
    if req.mode is not None:
        updates["mode"] = req.mode
    if req.repeats is not None:
        updates["repeats"] = req.repeats
    if updates:
        cfg = cfg.model_copy(update={"eval": cfg.eval.model_copy(update=updates)})
    splits, _ = load_dataset_cache(req.data)
    budgeted = label_budget(splits.train, req.label_fraction, derive_seed(cfg.seed, "budget"))
    report = training.evaluate(req.checkpoint, budgeted, splits.val, splits.test, cfg,
                               label_fraction=req.label_fraction)
    out = Path(req.out) if req.out else run_dir(cfg.output_dir, cfg.run_id) / "metrics.json"
    report.write(out)
    return {
        "metrics_path": str(out),
        "mean_f1": report.mean_f1,
        "per_repeat": report.per_repeat,
        "mode": report.mode,
        "label_fraction": report.label_fraction,
    }


def run_embed(req: EmbedRequest) -> dict:
    splits, _ = load_dataset_cache(req.data)
    dataset = getattr(splits, req.split)
    out = Path(req.out) if req.out else run_dir(req.output_dir, req.run_id) / "embeddings.csv"
    return training.export_representations(req.checkpoint, dataset, req.n, req.seed, out)


def run_sweep(req: SweepRequest) -> dict:
    cfg = req.config
    out = Path(req.out) if req.out else run_dir(cfg.output_dir, cfg.run_id)
    splits, _ = load_dataset_cache(req.data)
    rows = training.sweep(cfg, req.grid, splits.train, splits.val, splits.test, out,
                          label_fraction=req.label_fraction)
    failed = sum(1 for r in rows if r["status"] != "ok")
    return {
        "csv_path": str(Path(out) / "sweep.csv"),
        "cells": len(rows),
        "failed": failed,
        "rows": rows,
    }
