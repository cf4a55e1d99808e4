"""Exception taxonomy shared across the package.

``ConfigError`` means the caller asked for something invalid; the CLI maps
it to exit code 1. ``NumericError`` means a computation failed on valid
input (non-PD matrix, divergent solve); the CLI maps it to exit code 2.
"""

from __future__ import annotations


class CcdesignError(Exception):
    """Base class for all package errors."""


class ConfigError(CcdesignError):
    """Invalid configuration, parameters, or input data shape."""


class NumericError(CcdesignError):
    """Numerically invalid state reached on structurally valid input."""


class DegenerateGraphError(ConfigError):
    """Random graph came out with no edges; covariance undefined."""


class InfeasibleBudgetError(ConfigError):
    """The measurement budget cannot meet the design equality constraint."""

    def __init__(self, budget: float, b_min: float):
        self.budget = float(budget)
        self.b_min = float(b_min)
        super().__init__(
            f"budget {budget:g} below minimum feasible {b_min:.6g} "
            f"(need ||c||_1 >= 1/max|delta_k|)"
        )


class ActionError(CcdesignError):
    """A measurement action violated the environment's contract."""


class DataError(CcdesignError):
    """An observation or data value was non-finite or otherwise unusable."""


class IngestError(ConfigError):
    """Raw sensor data could not be parsed or preprocessed."""
