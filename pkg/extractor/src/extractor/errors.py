class ExtractorError(Exception):
    """Base class for extractor failures."""


class MediaError(ExtractorError):
    """Input media cannot be decoded or is structurally invalid."""


class ConfigError(ExtractorError):
    """Bad lockfile, manifest, or CLI arguments."""
