"""Exception types shared across solver layers."""

from __future__ import annotations


class SolverError(RuntimeError):
    """Base class for solver failures (linear or nonlinear)."""


class HypothesisViolation(ValueError):
    """Problem data violates a hypothesis the method relies on.

    The `hypothesis` attribute names the violated assumption; command line
    entry points map this to exit code 2.
    """

    def __init__(self, message: str, hypothesis: str):
        super().__init__(f"{message} [violated hypothesis: {hypothesis}]")
        self.hypothesis = hypothesis
