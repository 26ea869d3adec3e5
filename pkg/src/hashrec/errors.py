"""Shared exception types."""


class HashrecError(Exception):
    """Base class for engine errors."""


class ValidationError(HashrecError):
    """Bad input data (manifest, bundle, flags). CLI exit code 1."""


class ConfigError(HashrecError):
    """Configuration that cannot produce a usable artifact. CLI exit code 1."""


class TrainingError(HashrecError):
    """Runtime failure during training (e.g. non-finite loss). CLI exit code 2."""
