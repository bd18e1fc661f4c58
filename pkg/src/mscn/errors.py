"""Exception hierarchy shared across the package.

Every error raised deliberately by this package derives from MscnError so
the CLI can map failure categories to exit codes.
"""


class MscnError(Exception):
    """Base class for all package errors."""


class ShapeError(MscnError):
    """Operands have incompatible or unsupported shapes."""


class SpecError(MscnError):
    """An architecture spec is malformed (dangling shortcut, bad layer kind, ...)."""


class ConfigError(MscnError):
    """A run configuration is invalid (unknown key, missing path, bad value)."""


class DataError(MscnError):
    """A dataset, manifest, or label map cannot be used as requested."""


class CheckpointError(MscnError):
    """A checkpoint file is corrupt, truncated, or of an unsupported version."""
