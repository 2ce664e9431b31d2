"""Python bindings for the luq C++ core."""

from ._luq import *  # noqa: F401,F403
from ._luq import (
    Error,
    FormatError,
    ValidationError,
    NumericalError,
    ConfigError,
    MissingArtifactError,
)

__version__ = "0.1.0"
