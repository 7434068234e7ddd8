"""Base classes for the exceptions raised across :mod:`bbm_absorb`.

Each module defines its own, more specific exceptions on top of these two, so
callers can catch by category (bad input vs. failed numerics) and the command
line front end can map them to exit codes.
"""

__all__ = ["ModelError", "NumericalError"]


class ModelError(ValueError):
    """Input that violates a model or operation precondition."""


class NumericalError(ArithmeticError):
    """A solver, quadrature or extraction did not meet its tolerance."""
