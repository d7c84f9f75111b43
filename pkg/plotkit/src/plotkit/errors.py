class PlotkitError(Exception):
    """Base class for all plotkit errors."""


class SchemaError(PlotkitError):
    """A CSV is missing, empty, or lacks a required column."""


class FigureError(PlotkitError):
    """Unknown figure id or unusable figure options."""
