"""Operator kernels: ``reference`` (naive oracle) and ``optimized``."""

from . import optimized, reference

__all__ = ["optimized", "reference"]
