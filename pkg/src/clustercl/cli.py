"""Command-line interface; a thin client over the service API.

Every command builds a request model, submits it through ServiceClient
(in-process by default, remote with --server/CLUSTERCL_SERVER) and exits 0
only when the job succeeded and its artifact is on disk. Config precedence:
package defaults < --config file < --set overrides < dedicated flags.
"""

from __future__ import annotations

import json
from pathlib import Path

import click

from .client import ServiceClient, ServiceError
from .config import load_config, parse_override
from .errors import ClusterCLError

_EVAL_MODES = {"linear": "linear_eval", "fine_tune": "fine_tune", "finetune": "fine_tune"}


@click.group()
@click.option("--server", envvar="CLUSTERCL_SERVER", default=None,
              help="Base URL of a running service; default runs in-process.")
@click.pass_context
def main(ctx: click.Context, server: str | None) -> None:
    ctx.obj = {"server": server}


def _client(ctx: click.Context) -> ServiceClient:
    return ServiceClient(ctx.obj["server"])


def _submit(ctx: click.Context, path: str, payload: dict) -> dict:
    client = _client(ctx)
    try:
        job = client.run_job(path, payload)
    except (ServiceError, ClusterCLError) as exc:
        raise click.ClickException(str(exc))
    finally:
        client.close()
    return job["result"]


def _require_artifact(path_str: str) -> None:
    if not Path(path_str).exists():
        raise click.ClickException(f"expected artifact was not written: {path_str}")


def _build_config(config_path: str | None, set_pairs: tuple[str, ...], seed: int | None,
                  run_id: str | None, output_dir: str | None) -> dict:
    overrides = dict(parse_override(pair) for pair in set_pairs)
    if seed is not None:
        overrides["seed"] = seed
    if run_id is not None:
        overrides["run_id"] = run_id
    if output_dir is not None:
        overrides["output_dir"] = output_dir
    return load_config(config_path, overrides).model_dump(mode="json")


config_options = [
    click.option("--config", "config_path", type=click.Path(), default=None,
                 help="JSON experiment config."),
    click.option("--set", "set_pairs", multiple=True, metavar="KEY=VALUE",
                 help="Dotted config override, e.g. loss.variant=nt_xent."),
    click.option("--seed", type=int, default=None),
    click.option("--run-id", default=None),
    click.option("--output-dir", default=None),
]


def with_config_options(fn):
    for opt in reversed(config_options):
        fn = opt(fn)
    return fn


@main.command("prepare-data")
@click.option("--dataset", type=click.Choice(["uci_har", "usc_had", "motion_sense", "synthetic", "csv"]),
              default="synthetic", show_default=True)
@click.option("--root", type=str, default=None, help="Dataset root (not needed for synthetic).")
@click.option("--window", "window_length", type=click.IntRange(min=1), default=None,
              help="Window length in samples; defaults per dataset.")
@click.option("--overlap", type=click.FloatRange(0.0, 1.0, max_open=True), default=0.5, show_default=True)
@click.option("--val-subjects", default=None, help="Comma-separated subject ids.")
@click.option("--test-subjects", default=None, help="Comma-separated subject ids.")
@click.option("--val-fraction", type=float, default=0.2, show_default=True)
@click.option("--test-fraction", type=float, default=0.2, show_default=True)
@click.option("--no-normalize", is_flag=True, help="Skip per-channel z-scoring.")
@click.option("--synthetic", "synthetic_json", default=None,
              help='Synthetic generator params as JSON, e.g. \'{"classes": 3}\'.')
@click.option("--seed", type=int, default=1234, show_default=True)
@click.option("--run-id", default="prepare", show_default=True)
@click.option("--output-dir", default=None)
@click.option("--out", default=None, help="Cache file path.")
@click.pass_context
def prepare_data(ctx, dataset, root, window_length, overlap, val_subjects, test_subjects,
                 val_fraction, test_fraction, no_normalize, synthetic_json, seed, run_id,
                 output_dir, out) -> None:
    """Ingest, window and split a dataset into a cache file."""
    payload = {
        "dataset": dataset,
        "root": root,
        "window_length": window_length,
        "overlap": overlap,
        "val_subjects": val_subjects.split(",") if val_subjects else None,
        "test_subjects": test_subjects.split(",") if test_subjects else None,
        "val_fraction": val_fraction,
        "test_fraction": test_fraction,
        "normalize": not no_normalize,
        "seed": seed,
        "run_id": run_id,
        "output_dir": output_dir,
        "out": out,
    }
    if synthetic_json:
        payload["synthetic"] = json.loads(synthetic_json)
    result = _submit(ctx, "/data/prepare", payload)
    _require_artifact(result["cache_path"])
    click.echo(f"cache: {result['cache_path']}")
    click.echo(f"window_length={result['window_length']} stride={result['stride']} "
               f"classes={result['class_count']}")
    for name, count in result["counts"].items():
        click.echo(f"  {name}: {count} windows")
    if result["dropped_rows"]:
        click.echo(f"dropped {result['dropped_rows']} non-finite rows")


@main.command()
@with_config_options
@click.option("--data", required=True, help="Dataset cache path.")
@click.option("--out", default=None, help="Run directory.")
@click.option("--force", is_flag=True, help="Overwrite an existing checkpoint.")
@click.pass_context
def pretrain(ctx, config_path, set_pairs, seed, run_id, output_dir, data, out, force) -> None:
    """Contrastive pre-training; writes checkpoint + training log."""
    payload = {
        "config": _build_config(config_path, set_pairs, seed, run_id, output_dir),
        "data": data,
        "out": out,
        "force": force,
    }
    result = _submit(ctx, "/runs/pretrain", payload)
    _require_artifact(result["checkpoint_path"])
    click.echo(f"checkpoint: {result['checkpoint_path']}")
    click.echo(f"log: {result['log_path']}")
    click.echo(f"final_loss={result['final_loss']:.4f} "
               f"({result['epochs']} epochs x {result['steps_per_epoch']} steps)")


@main.command("eval")
@with_config_options
@click.option("--checkpoint", required=True)
@click.option("--data", required=True)
@click.option("--mode", type=click.Choice(sorted(_EVAL_MODES)), default="linear", show_default=True)
@click.option("--label-fraction", type=click.FloatRange(0.0, 1.0, min_open=True), default=1.0,
              show_default=True)
@click.option("--repeats", type=click.IntRange(min=1), default=None)
@click.option("--out", default=None, help="Metrics JSON path.")
@click.pass_context
def eval_cmd(ctx, config_path, set_pairs, seed, run_id, output_dir, checkpoint, data, mode,
             label_fraction, repeats, out) -> None:
    """Linear evaluation or fine-tuning of a pre-trained checkpoint."""
    payload = {
        "config": _build_config(config_path, set_pairs, seed, run_id, output_dir),
        "checkpoint": checkpoint,
        "data": data,
        "mode": _EVAL_MODES[mode],
        "label_fraction": label_fraction,
        "repeats": repeats,
        "out": out,
    }
    result = _submit(ctx, "/runs/eval", payload)
    _require_artifact(result["metrics_path"])
    click.echo(f"metrics: {result['metrics_path']}")
    click.echo(f"mean_f1={result['mean_f1']:.4f} mode={result['mode']} "
               f"label_fraction={result['label_fraction']}")


@main.command()
@click.option("--checkpoint", required=True)
@click.option("--data", required=True)
@click.option("--n", type=click.IntRange(min=1), default=1000, show_default=True)
@click.option("--split", type=click.Choice(["train", "val", "test"]), default="train",
              show_default=True)
@click.option("--seed", type=int, default=1234, show_default=True)
@click.option("--run-id", default="embed", show_default=True)
@click.option("--output-dir", default=None)
@click.option("--out", default=None, help="CSV path.")
@click.pass_context
def embed(ctx, checkpoint, data, n, split, seed, run_id, output_dir, out) -> None:
    """Export sampled window representations as CSV (for external t-SNE etc.)."""
    payload = {
        "checkpoint": checkpoint,
        "data": data,
        "n": n,
        "split": split,
        "seed": seed,
        "run_id": run_id,
        "output_dir": output_dir,
        "out": out,
    }
    result = _submit(ctx, "/runs/embed", payload)
    _require_artifact(result["out_path"])
    click.echo(f"embeddings: {result['out_path']} ({result['rows']} rows x "
               f"{result['dims']} dims + label)")


@main.command()
@with_config_options
@click.option("--data", required=True)
@click.option("--grid", "grid_json", required=True,
              help='JSON grid, e.g. \'{"cluster.alpha": [0, 80, 100]}\'.')
@click.option("--label-fraction", type=click.FloatRange(0.0, 1.0, min_open=True), default=1.0,
              show_default=True)
@click.option("--out", default=None, help="Sweep output directory.")
@click.pass_context
def sweep(ctx, config_path, set_pairs, seed, run_id, output_dir, data, grid_json,
          label_fraction, out) -> None:
    """Grid sweep of pretrain+evaluate; one CSV row per cell."""
    try:
        grid = json.loads(grid_json)
    except json.JSONDecodeError as exc:
        raise click.ClickException(f"--grid is not valid JSON: {exc}")
    payload = {
        "config": _build_config(config_path, set_pairs, seed, run_id, output_dir),
        "data": data,
        "grid": grid,
        "label_fraction": label_fraction,
        "out": out,
    }
    result = _submit(ctx, "/runs/sweep", payload)
    _require_artifact(result["csv_path"])
    click.echo(f"sweep table: {result['csv_path']}")
    click.echo(f"cells={result['cells']} failed={result['failed']}")


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--workers", "max_workers", type=int, default=2, show_default=True,
              help="Background job workers.")
def serve(host: str, port: int, max_workers: int) -> None:
    """Run the HTTP service."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(max_workers=max_workers), host=host, port=port)


if __name__ == "__main__":
    main()
