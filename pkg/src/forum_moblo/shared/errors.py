"""
Exception hierarchy shared by the solver kernel, the problem zoo and the harness.
The CLI maps these onto process exit codes.
"""

from typing import Any, Optional, Sequence


class ForumError(Exception):
    """Base class for every error raised by forum_moblo."""


class ConfigurationError(ForumError, ValueError):
    """Invalid configuration, problem spec or experiment document."""

    def __init__(self, message: str, field: Optional[str] = None):
        self.field = field
        if field:
            message = f"{field}: {message}"
        super().__init__(message)


class StructuralError(ForumError, ValueError):
    """An oracle returned an array whose shape disagrees with the declared dims."""

    def __init__(self, oracle: str, got: tuple, expected: tuple):
        self.oracle = oracle
        self.got = got
        self.expected = expected
        super().__init__(f"{oracle} returned shape {got}, expected {expected}")


class CapabilityError(ForumError):
    """A required optional oracle (exact solution, Jacobian, HVP, constants) is missing."""

    def __init__(self, capability: str, problem: Optional[str] = None):
        self.capability = capability
        self.problem = problem
        where = f" by problem '{problem}'" if problem else ""
        super().__init__(f"capability '{capability}' is not provided{where}")


class DivergenceError(ForumError, ArithmeticError):
    """A non-finite iterate was produced."""

    def __init__(
        self,
        message: str,
        step: Optional[int] = None,
        record: Any = None,
        trace: Optional[Sequence[Any]] = None,
    ):
        self.step = step
        self.record = record
        self.trace = list(trace) if trace is not None else []
        if step is not None:
            message = f"{message} (step {step})"
        super().__init__(message)
