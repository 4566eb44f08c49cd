"""Benchmarks for local zeroth-order optimizers on randomized variational quantum tasks."""

from .errors import ConfigurationError

__version__ = "0.1.0"
__all__ = ["ConfigurationError", "__version__"]
