"""Correlation-aware continuous measurement design for top-n stream identification."""

__version__ = "0.1.0"
