"""
Error types shared by the models, services and CLI.

Each error subclasses the builtin the caller would naturally expect, so code
that only knows about ValueError/KeyError/RuntimeError keeps working.
"""
from __future__ import annotations


class DimensionError(ValueError):
    """Operand shapes or lengths do not conform."""


class ContractViolation(ValueError):
    """A documented precondition was not met by the caller."""


class ValidationError(ValueError):
    """Input data or configuration failed validation."""

    def __init__(self, message: str, fields: list[str] | None = None):
        super().__init__(message)
        self.fields = list(fields or [])


class SchemaError(ValidationError):
    """A record is missing a required field."""


class DatasetParseError(ValidationError):
    """A dataset line could not be parsed."""

    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class InsufficientDataError(ValueError):
    """Not enough observations to compute a statistic."""


class DegenerateDataError(ValueError):
    """Data collapses to fewer dimensions than the computation needs."""


class UndefinedUsageError(ValueError):
    """A codebook has recorded no usage yet."""


class UndefinedSimilarityError(ValueError):
    """Cosine similarity of a zero vector."""


class UnsupportedOperationError(NotImplementedError):
    """Unknown tensor operation kind."""


class NumericError(ArithmeticError):
    """A numeric evaluation produced a non-finite value."""

    def __init__(self, message: str, coordinate: tuple[int, ...] | None = None):
        super().__init__(message)
        self.coordinate = coordinate


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss term."""

    def __init__(self, step: int, term: str, value: float):
        super().__init__(f"training diverged at step {step}: {term} = {value}")
        self.step = step
        self.term = term
        self.value = value


class UnknownNodeError(KeyError):
    """A node id does not exist in the graph."""


class UnknownLabelError(KeyError):
    """A speaker, accent or utterance id is not present in the data."""
