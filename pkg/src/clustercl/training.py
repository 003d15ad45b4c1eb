"""Pre-training loop, downstream evaluation, metrics, sweeps, exports.

Pre-training is strictly unsupervised: it consumes only the window values of
its dataset (activity labels are never read). Downstream evaluation loads a
checkpoint, drops the projection head, applies the freeze policy and trains a
linear classifier with cross-entropy, selecting the best epoch by validation
macro F1 and averaging the test score over repeated runs.
"""

from __future__ import annotations

import copy
import csv
import itertools
import json
import logging
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from . import clustering
from .augmentation import make_views
from .config import ExperimentConfig
from .data import WindowedDataset, label_budget
from .errors import ConfigError, DataError
from .loss import contrastive_loss
from .model import ContrastiveModel, load_checkpoint, make_classifier, save_checkpoint
from .seeding import derive_seed, rng_for

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# metrics


def mean_f1(predictions: np.ndarray, labels: np.ndarray,
            num_classes: int) -> tuple[float, np.ndarray, np.ndarray]:
    """Macro F1 over all ``num_classes`` classes.

    Per class, F1 = 2*tp / (2*tp + fp + fn) (identical to 2PR/(P+R)), defined
    as 0 when the denominator is 0, so absent classes count as 0 in the mean.
    Returns (macro_f1, per_class_f1[K], confusion[K x K]) with confusion rows
    indexed by true label, columns by prediction.
    """
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape or predictions.ndim != 1:
        raise ConfigError("predictions and labels must be 1-D arrays of equal length")
    if predictions.size == 0:
        raise ConfigError("cannot compute F1 of an empty prediction set")
    for arr, name in ((predictions, "predictions"), (labels, "labels")):
        if arr.min() < 0 or arr.max() >= num_classes:
            raise ConfigError(f"{name} contain ids outside [0, {num_classes})")
    confusion = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(confusion, (labels, predictions), 1)
    tp = np.diag(confusion).astype(np.float64)
    fp = confusion.sum(axis=0) - tp
    fn = confusion.sum(axis=1) - tp
    denom = 2 * tp + fp + fn
    per_class = np.where(denom > 0, 2 * tp / np.where(denom > 0, denom, 1.0), 0.0)
    # sequential sum: the macro mean is defined class-by-class, and pairwise
    # reductions would drift from the definition by an ulp
    macro = sum(per_class.tolist()) / num_classes
    return macro, per_class, confusion


@dataclass
class MetricsReport:
    """Evaluation result; per_class_f1 and confusion aggregate over repeats."""

    mean_f1: float
    per_class_f1: list[float]
    per_repeat: list[float]
    confusion: list[list[int]]
    config_fingerprint: str
    mode: str
    label_fraction: float
    repeats: int

    def to_json(self, meta: dict | None = None) -> str:
        payload = {
            "mean_f1": self.mean_f1,
            "per_class_f1": self.per_class_f1,
            "per_repeat": self.per_repeat,
            "confusion": self.confusion,
            "config_fingerprint": self.config_fingerprint,
            "mode": self.mode,
            "label_fraction": self.label_fraction,
            "repeats": self.repeats,
            "meta": meta or {},
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    def write(self, path: str | Path) -> None:
        meta = {"generated_at": datetime.now(timezone.utc).isoformat()}
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(self.to_json(meta) + "\n")


# ---------------------------------------------------------------------------
# pre-training


@dataclass
class PretrainResult:
    checkpoint_path: Path
    log_path: Path
    final_loss: float
    steps_per_epoch: int
    epochs: int


def pretrain(train: WindowedDataset, config: ExperimentConfig, out_dir: str | Path) -> PretrainResult:
    """Contrastive pre-training over the train split. Labels are never read.

    Per batch: two augmentation views -> encoder -> normalized projections ->
    per-batch clustering of each anchor branch (per the loss variant) ->
    masked contrastive loss -> Adam step. The final partial batch of each
    epoch is dropped so clustering always sees full batches.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    pcfg = config.pretrain
    values = train.values  # the one dataset field pre-training touches
    n = values.shape[0]
    if pcfg.batch_size > n:
        raise ConfigError(f"batch_size {pcfg.batch_size} exceeds dataset size {n}")
    if pcfg.num_threads:
        torch.set_num_threads(pcfg.num_threads)
    torch.manual_seed(derive_seed(config.seed, "pretrain", "torch"))

    cluster_cfg = config.cluster
    if cluster_cfg.k is None:
        cluster_cfg = cluster_cfg.model_copy(update={"k": train.class_count})
    model = ContrastiveModel(train.channel_count, config.model)
    model.train()
    optimizer = torch.optim.Adam(model.parameters(), lr=pcfg.lr)

    steps_per_epoch = n // pcfg.batch_size
    log_path = out_dir / "training_log.jsonl"
    checkpoint_path = out_dir / "checkpoint.ckpt"
    final_loss = float("nan")
    with log_path.open("w") as log_file:
        for epoch in range(pcfg.epochs):
            order = rng_for(config.seed, "shuffle", epoch).permutation(n)
            for step in range(steps_per_epoch):
                idx = order[step * pcfg.batch_size:(step + 1) * pcfg.batch_size]
                view1, view2 = make_views(values[idx], config.aug,
                                          rng_for(config.seed, "aug", epoch, step))
                p1 = model(torch.from_numpy(view1), branch_id=1)
                p2 = model(torch.from_numpy(view2), branch_id=2)
                asg1 = asg2 = None
                if config.loss.variant != "nt_xent":
                    asg1 = clustering.fit_predict(
                        p1, cluster_cfg, seed=derive_seed(config.seed, "cluster", epoch, step, 1))
                    if cluster_cfg.cluster_branch == "per_anchor":
                        asg2 = clustering.fit_predict(
                            p2, cluster_cfg, seed=derive_seed(config.seed, "cluster", epoch, step, 2))
                    if config.loss.variant == "cluster_confidence":
                        asg1 = clustering.apply_confidence(asg1, cluster_cfg.alpha)
                        if asg2 is not None:
                            asg2 = clustering.apply_confidence(asg2, cluster_cfg.alpha)
                breakdown = contrastive_loss(p1, p2, config.loss, asg1, asg2)
                optimizer.zero_grad()
                breakdown.total.backward()
                optimizer.step()
                final_loss = float(breakdown.total.detach())
                log_file.write(json.dumps(breakdown.log_record(epoch, step)) + "\n")
            if pcfg.checkpoint_interval and (epoch + 1) % pcfg.checkpoint_interval == 0 \
                    and epoch + 1 < pcfg.epochs:
                save_checkpoint(out_dir / f"checkpoint_epoch{epoch + 1:04d}.ckpt", model,
                                epoch + 1, config.fingerprint())
    save_checkpoint(checkpoint_path, model, pcfg.epochs, config.fingerprint())
    return PretrainResult(checkpoint_path, log_path, final_loss, steps_per_epoch, pcfg.epochs)


# ---------------------------------------------------------------------------
# downstream evaluation


def evaluate(checkpoint_path: str | Path, train: WindowedDataset, val: WindowedDataset,
             test: WindowedDataset, config: ExperimentConfig,
             label_fraction: float = 1.0) -> MetricsReport:
    """Downstream protocol on a pre-trained checkpoint (projection head dropped).

    Trains the classifier ``eval.epochs`` epochs per repeat, keeps the epoch
    with the best validation macro F1, and reports the test macro F1 averaged
    over ``eval.repeats`` runs with derived seeds.
    """
    ecfg = config.eval
    if ecfg.num_threads:
        torch.set_num_threads(ecfg.num_threads)
    if len(train) == 0 or len(test) == 0:
        raise DataError("evaluation needs nonempty train and test splits")
    model, _ = load_checkpoint(checkpoint_path)
    num_classes = train.class_count
    missing = sorted(set(np.unique(test.labels).tolist()) - set(np.unique(train.labels).tolist()))
    if missing:
        logger.warning("classes %s appear in test but not in the (budgeted) train split; "
                       "their F1 will be 0", missing)
    if len(val) == 0:
        logger.warning("validation split is empty; reporting the final epoch instead of "
                       "the best one")
    lr = ecfg.resolved_lr()
    batch_size = min(ecfg.resolved_batch_size(label_fraction), len(train))

    per_repeat: list[float] = []
    per_class_rows: list[np.ndarray] = []
    confusion_total = np.zeros((num_classes, num_classes), dtype=np.int64)
    for repeat in range(ecfg.repeats):
        seed = derive_seed(config.seed, "eval", repeat)
        if ecfg.mode == "linear_eval":
            preds, labels = _run_linear_eval(model, train, val, test, num_classes,
                                             lr, batch_size, ecfg.epochs, seed)
        else:
            preds, labels = _run_fine_tune(model, train, val, test, num_classes,
                                           lr, batch_size, ecfg.epochs, seed)
        score, per_class, confusion = mean_f1(preds, labels, num_classes)
        per_repeat.append(score)
        per_class_rows.append(per_class)
        confusion_total += confusion
    per_class_mean = np.mean(per_class_rows, axis=0)
    return MetricsReport(
        mean_f1=float(np.mean(per_repeat)),
        per_class_f1=[float(v) for v in per_class_mean],
        per_repeat=[float(v) for v in per_repeat],
        confusion=confusion_total.tolist(),
        config_fingerprint=config.fingerprint(),
        mode=ecfg.mode,
        label_fraction=label_fraction,
        repeats=ecfg.repeats,
    )


def encode_dataset(model: ContrastiveModel, dataset: WindowedDataset,
                   batch_size: int = 512) -> np.ndarray:
    """Frozen eval-mode encoder features for a whole dataset."""
    model.eval()
    chunks = []
    with torch.no_grad():
        for start in range(0, len(dataset), batch_size):
            x = torch.from_numpy(dataset.values[start:start + batch_size])
            chunks.append(model.encoder(x).numpy())
    return np.concatenate(chunks, axis=0)


def _run_linear_eval(model, train, val, test, num_classes, lr, batch_size, epochs, seed):
    # encoder fully frozen and in eval mode -> features are constant, so they
    # are computed once and the classifier trains on them directly
    feat_train = torch.from_numpy(encode_dataset(model, train))
    feat_val = torch.from_numpy(encode_dataset(model, val)) if len(val) else None
    feat_test = torch.from_numpy(encode_dataset(model, test))
    y_train = torch.from_numpy(train.labels)

    torch.manual_seed(seed)
    classifier = make_classifier(model.encoder.output_dim, num_classes)
    optimizer = torch.optim.Adam(classifier.parameters(), lr=lr)
    best_state, best_score = None, -1.0
    n = feat_train.shape[0]
    for epoch in range(epochs):
        order = np.random.default_rng(derive_seed(seed, "shuffle", epoch)).permutation(n)
        classifier.train()
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            logits = classifier(feat_train[idx])
            loss = F.cross_entropy(logits, y_train[idx])
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
        if feat_val is not None:
            classifier.eval()
            with torch.no_grad():
                val_preds = classifier(feat_val).argmax(dim=1).numpy()
            score, _, _ = mean_f1(val_preds, val.labels, num_classes)
            if score > best_score:
                best_score = score
                best_state = copy.deepcopy(classifier.state_dict())
    if best_state is not None:
        classifier.load_state_dict(best_state)
    classifier.eval()
    with torch.no_grad():
        preds = classifier(feat_test).argmax(dim=1).numpy()
    return preds, test.labels


def _run_fine_tune(model, train, val, test, num_classes, lr, batch_size, epochs, seed):
    from .model import freeze_policy

    torch.manual_seed(seed)
    net = copy.deepcopy(model)
    classifier = make_classifier(net.encoder.output_dim, num_classes)
    freeze_policy("fine_tune", net.encoder, classifier)
    trainable = [p for p in net.encoder.parameters() if p.requires_grad]
    trainable += list(classifier.parameters())
    optimizer = torch.optim.Adam(trainable, lr=lr)
    y_train = torch.from_numpy(train.labels)
    best_state, best_score = None, -1.0
    n = len(train)
    for epoch in range(epochs):
        order = np.random.default_rng(derive_seed(seed, "shuffle", epoch)).permutation(n)
        net.encoder.train()
        classifier.train()
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            x = torch.from_numpy(train.values[idx])
            logits = classifier(net.encoder(x))
            loss = F.cross_entropy(logits, y_train[idx])
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
        if len(val):
            val_preds = _predict(net, classifier, val)
            score, _, _ = mean_f1(val_preds, val.labels, num_classes)
            if score > best_score:
                best_score = score
                best_state = (copy.deepcopy(net.encoder.state_dict()),
                              copy.deepcopy(classifier.state_dict()))
    if best_state is not None:
        net.encoder.load_state_dict(best_state[0])
        classifier.load_state_dict(best_state[1])
    return _predict(net, classifier, test), test.labels


def _predict(net, classifier, dataset, batch_size: int = 512) -> np.ndarray:
    net.encoder.eval()
    classifier.eval()
    preds = []
    with torch.no_grad():
        for start in range(0, len(dataset), batch_size):
            x = torch.from_numpy(dataset.values[start:start + batch_size])
            preds.append(classifier(net.encoder(x)).argmax(dim=1).numpy())
    return np.concatenate(preds)


# ---------------------------------------------------------------------------
# representation export


def export_representations(checkpoint_path: str | Path, dataset: WindowedDataset,
                           n: int, seed: int, out_path: str | Path) -> dict:
    """Sample ``n`` windows and write their normalized projections plus label
    as CSV (one representation column per dimension, label column last)."""
    model, _ = load_checkpoint(checkpoint_path)
    model.eval()
    size = len(dataset)
    if size == 0:
        raise DataError("cannot export representations of an empty dataset")
    if n > size:
        logger.warning("requested %d representations but dataset has %d windows; clamping", n, size)
        n = size
    idx = np.sort(rng_for(seed, "embed").choice(size, size=n, replace=False))
    with torch.no_grad():
        reps = []
        for start in range(0, n, 512):
            x = torch.from_numpy(dataset.values[idx[start:start + 512]])
            reps.append(model(x, branch_id=1).z.numpy())
    reps_arr = np.concatenate(reps, axis=0)
    labels = dataset.labels[idx]
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with out_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"z{i}" for i in range(reps_arr.shape[1])] + ["label"])
        for row, label in zip(reps_arr, labels):
            writer.writerow([f"{v:.8g}" for v in row] + [int(label)])
    return {"out_path": str(out_path), "rows": int(n), "dims": int(reps_arr.shape[1])}


# ---------------------------------------------------------------------------
# hyper-parameter sweeps


SWEEP_ALIASES = {"batch_size": "pretrain.batch_size", "epochs": "pretrain.epochs"}


def sweep(config: ExperimentConfig, grid: dict[str, list], train: WindowedDataset,
          val: WindowedDataset, test: WindowedDataset, out_dir: str | Path,
          label_fraction: float = 1.0) -> list[dict]:
    """Run pretrain+evaluate for each cell of the cartesian grid.

    Cell failures are recorded in their row and do not stop the sweep. Writes
    sweep.csv plus one metrics JSON per successful cell under ``out_dir``.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    keys = sorted(grid)
    rows: list[dict] = []
    cells = itertools.product(*(grid[k] for k in keys)) if keys else iter(())
    for cell_id, combo in enumerate(cells):
        params = dict(zip(keys, combo))
        row: dict = {"cell": cell_id, **params, "status": "ok", "mean_f1": "", "error": ""}
        try:
            cfg_dict = config.model_dump(mode="json")
            for key, value in params.items():
                _set_nested(cfg_dict, SWEEP_ALIASES.get(key, key), value)
            cell_cfg = ExperimentConfig.model_validate(cfg_dict)
            cell_dir = out_dir / f"cell{cell_id:03d}"
            budgeted = label_budget(train, label_fraction,
                                    derive_seed(cell_cfg.seed, "budget", cell_id))
            result = pretrain(train, cell_cfg, cell_dir)
            report = evaluate(result.checkpoint_path, budgeted, val, test, cell_cfg,
                              label_fraction=label_fraction)
            report.write(cell_dir / "metrics.json")
            row["mean_f1"] = f"{report.mean_f1:.6f}"
        except Exception as exc:
            logger.warning("sweep cell %d failed: %s", cell_id, exc)
            row["status"] = "failed"
            # single physical CSV line per cell
            row["error"] = " ".join(str(exc).split())
        rows.append(row)
    _write_sweep_csv(out_dir / "sweep.csv", keys, rows)
    return rows


def _write_sweep_csv(path: Path, keys: list[str], rows: list[dict]) -> None:
    header = ["cell", *keys, "status", "mean_f1", "error"]
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=header)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def _set_nested(tree: dict, dotted: str, value) -> None:
    parts = dotted.split(".")
    node = tree
    for part in parts[:-1]:
        node = node.setdefault(part, {})
    node[parts[-1]] = value
