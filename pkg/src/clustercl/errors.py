"""Exception types shared across the package."""


class ClusterCLError(Exception):
    """Base class for package errors."""


class ConfigError(ClusterCLError):
    """Invalid configuration or arguments (maps to HTTP 400 / CLI exit 2)."""


class DataError(ClusterCLError):
    """Dataset layout or content problems."""


class DegenerateRepresentationError(ClusterCLError):
    """Projection head produced an exactly-zero vector that cannot be normalized."""


class CheckpointExistsError(ClusterCLError):
    """Refusing to overwrite an existing checkpoint without --force."""
