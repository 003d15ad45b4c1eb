"""Self-supervised contrastive pre-training for wearable-sensor activity
recognition, with cluster-masked negative selection."""

__version__ = "0.1.0"
