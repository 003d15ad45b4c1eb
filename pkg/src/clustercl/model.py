"""Temporal conv encoder, projection head, linear classifier, checkpoints.

The encoder is a stack of valid (unpadded) 1-D convolutions with ReLU and
dropout, closed by a global max-pool over time, so any window long enough for
the receptive field maps to a fixed-size feature vector. The projection head
is a 3-layer MLP whose L2-normalized output feeds the contrastive loss; it is
discarded for downstream classification.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .config import ModelConfig
from .container import read_container, write_container
from .errors import ConfigError, DegenerateRepresentationError


@dataclass
class ProjectionBatch:
    """L2-normalized projections for one augmentation branch."""

    z: torch.Tensor  # [B x D], unit rows
    branch_id: int


class ConvEncoder(nn.Module):
    def __init__(self, in_channels: int, cfg: ModelConfig):
        super().__init__()
        self.in_channels = in_channels
        self.cfg = cfg
        # smallest window the valid convolutions can digest
        self.min_window = sum(k - 1 for k in cfg.kernel_sizes) + 1
        blocks = []
        prev = in_channels
        for filters, kernel in zip(cfg.conv_filters, cfg.kernel_sizes):
            blocks.append(nn.Sequential(
                nn.Conv1d(prev, filters, kernel_size=kernel),
                nn.ReLU(),
                nn.Dropout(cfg.dropout_rate),
            ))
            prev = filters
        self.blocks = nn.ModuleList(blocks)
        self.output_dim = prev

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """Encode [B x W x C] windows into [B x D_enc] features."""
        if x.ndim != 3:
            raise ConfigError(f"expected [B x W x C] input, got shape {tuple(x.shape)}")
        if x.shape[2] != self.in_channels:
            raise ConfigError(f"expected {self.in_channels} channels, got {x.shape[2]}")
        if x.shape[1] < self.min_window:
            raise ConfigError(f"window length {x.shape[1]} below receptive field {self.min_window}")
        h = x.transpose(1, 2)  # conv1d wants [B x C x W]
        for block in self.blocks:
            h = block(h)
        return h.amax(dim=2)


class ProjectionHead(nn.Module):
    """MLP with ReLU between layers and a linear final layer."""

    def __init__(self, in_dim: int, cfg: ModelConfig):
        super().__init__()
        layers: list[nn.Module] = []
        prev = in_dim
        for i, dim in enumerate(cfg.projection_dims):
            layers.append(nn.Linear(prev, dim))
            if i < len(cfg.projection_dims) - 1:
                layers.append(nn.ReLU())
            prev = dim
        self.net = nn.Sequential(*layers)
        self.output_dim = prev

    def forward(self, h: torch.Tensor) -> torch.Tensor:
        return self.net(h)


class ContrastiveModel(nn.Module):
    """Encoder + projection head trained jointly during pre-training."""

    def __init__(self, in_channels: int, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.encoder = ConvEncoder(in_channels, cfg)
        self.head = ProjectionHead(self.encoder.output_dim, cfg)

    def project(self, h: torch.Tensor, branch_id: int) -> ProjectionBatch:
        z = self.head(h)
        norms = torch.linalg.vector_norm(z, dim=1)
        if bool((norms == 0).any()):
            raise DegenerateRepresentationError("projection head emitted an exactly-zero vector")
        return ProjectionBatch(z / norms.unsqueeze(1), branch_id)

    def forward(self, x: torch.Tensor, branch_id: int = 1) -> ProjectionBatch:
        return self.project(self.encoder(x), branch_id)


def make_classifier(encoder_dim: int, num_classes: int) -> nn.Linear:
    """Single linear map to logits, no activation."""
    if num_classes < 2:
        raise ConfigError("classifier needs at least 2 classes")
    return nn.Linear(encoder_dim, num_classes)


def freeze_policy(mode: str, encoder: ConvEncoder, classifier: nn.Module) -> list[str]:
    """Set requires_grad per evaluation mode; returns trainable parameter names.

    linear_eval freezes the whole encoder; fine_tune unfreezes its last two
    parameterized blocks alongside the classifier.
    """
    if mode not in ("linear_eval", "fine_tune"):
        raise ConfigError(f"unknown evaluation mode {mode!r}")
    for p in encoder.parameters():
        p.requires_grad_(False)
    if mode == "fine_tune":
        for block in encoder.blocks[-2:]:
            for p in block.parameters():
                p.requires_grad_(True)
    for p in classifier.parameters():
        p.requires_grad_(True)
    names = [f"encoder.{n}" for n, p in encoder.named_parameters() if p.requires_grad]
    names += [f"classifier.{n}" for n, p in classifier.named_parameters() if p.requires_grad]
    return names


# ---------------------------------------------------------------------------
# checkpoints (framework-agnostic: JSON manifest + named float32 tensors)


def save_checkpoint(path, model: ContrastiveModel, epoch: int, config_fingerprint: str) -> None:
    tensors = {}
    for prefix, module in (("encoder", model.encoder), ("head", model.head)):
        for name, value in module.state_dict().items():
            tensors[f"{prefix}.{name}"] = value.detach().cpu().numpy()
    manifest = {
        "kind": "model-checkpoint",
        "format_version": 1,
        "epoch": epoch,
        "config_fingerprint": config_fingerprint,
        "in_channels": model.encoder.in_channels,
        "model": model.cfg.model_dump(mode="json"),
    }
    write_container(path, manifest, tensors)


def load_checkpoint(path) -> tuple[ContrastiveModel, dict]:
    manifest, tensors = read_container(path)
    if manifest.get("kind") != "model-checkpoint":
        raise ConfigError(f"{path} is not a model checkpoint")
    cfg = ModelConfig.model_validate(manifest["model"])
    model = ContrastiveModel(manifest["in_channels"], cfg)
    for prefix, module in (("encoder", model.encoder), ("head", model.head)):
        state = {}
        for name in module.state_dict():
            key = f"{prefix}.{name}"
            if key not in tensors:
                raise ConfigError(f"checkpoint missing tensor {key}")
            state[name] = torch.from_numpy(np.array(tensors[key]))
        module.load_state_dict(state)
    return model, manifest
