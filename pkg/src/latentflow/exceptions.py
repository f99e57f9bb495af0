"""Exception types shared across the package.

The CLI maps ValidationError to exit code 1 and NumericalError to exit
code 2; everything else is a bug.
"""


class ValidationError(ValueError):
    """Invalid inputs, shapes, config values, or file contents."""


class NumericalError(RuntimeError):
    """Numerical failure: NaN/Inf states, solver breakdown, diverged loss."""
