"""Exception families shared across the toolkit.

Every module-specific error derives from :class:`PanctError` so the CLI can
map failures onto stable exit codes.
"""


class PanctError(Exception):
    """Base class for all toolkit errors."""


class BadConfigError(PanctError):
    """Configuration is missing, malformed, or carries unknown keys."""


class IoFailureError(PanctError):
    """A read or write against the filesystem failed."""
