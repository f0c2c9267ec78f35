"""Pseudo-Zernike moment sparse-representation classification for radar images."""

from pzsrc.errors import ConfigError, DataError, NumericalError, PZError

__version__ = "0.1.0"

__all__ = ["ConfigError", "DataError", "NumericalError", "PZError", "__version__"]
