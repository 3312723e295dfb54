"""Exception hierarchy shared by every tfnas module."""


class TfnasError(Exception):
    """Base class for all library errors."""


class DimensionError(TfnasError, ValueError):
    """Operand shapes are incompatible."""


class DomainError(TfnasError, ValueError):
    """An operation was evaluated outside its mathematical domain."""


class ContractError(TfnasError, ValueError):
    """A documented precondition was violated."""


class NumericError(TfnasError, ArithmeticError):
    """Non-finite values or an iteration that failed to converge."""


class ValidationError(TfnasError, ValueError):
    """A genome or record breaks a structural invariant."""


class GenerationError(TfnasError, RuntimeError):
    """Random generation could not produce a valid object."""


class ParseError(TfnasError, ValueError):
    """Malformed text input, annotated with its location."""

    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
