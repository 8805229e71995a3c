"""Exception types shared across the package."""

from __future__ import annotations


class FeederFormatError(ValueError):
    """Raised when a feeder file cannot be parsed (syntax or schema)."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)
        self.line = line
        self.column = column


class ModelValidationError(ValueError):
    """Raised when a parsed feeder violates structural invariants."""

    def __init__(self, violations):
        self.violations = list(violations)
        lines = "; ".join(str(v) for v in self.violations)
        super().__init__(f"invalid feeder model: {lines}")


class PipelineError(RuntimeError):
    """A stage of the tap-selection pipeline failed (LP infeasible, divergence, ...)."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
