"""Figure rendering for fmsync CSV output directories."""

from . import cli, figures, loading
from .errors import FigureError, PlotkitError, SchemaError
from .figures import FigureSpec, build, render

__version__ = "0.1.0"

__all__ = [
    "FigureError",
    "FigureSpec",
    "PlotkitError",
    "SchemaError",
    "build",
    "cli",
    "figures",
    "loading",
    "render",
]
