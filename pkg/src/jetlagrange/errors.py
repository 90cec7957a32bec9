"""Exception hierarchy shared by every layer of the package."""

from __future__ import annotations


class JetLagrangeError(Exception):
    """Base class for all errors raised by jetlagrange."""


class ConfigurationError(JetLagrangeError, ValueError):
    """Invalid parameters: bad index, unsupported order, mismatched shapes."""


class SingularPointError(JetLagrangeError, ArithmeticError):
    """A function was evaluated outside its domain (or a matrix is singular)."""

    def __init__(self, message: str, *, function: str | None = None,
                 value: float | None = None, span: tuple[int, int] | None = None):
        super().__init__(message)
        self.function = function
        self.value = value
        self.span = span

    def with_span(self, span: tuple[int, int], text: str | None = None) -> "SingularPointError":
        if self.span is not None:
            return self
        where = f" in '{text[span[0]:span[1]]}'" if text else ""
        err = type(self)(f"{self.args[0]}{where} (chars {span[0]}-{span[1]})",
                         function=self.function, value=self.value, span=span)
        return err


class SingularMetricError(SingularPointError):
    """A metric (or Jacobian) is numerically degenerate at the requested point."""


class ExpressionError(JetLagrangeError):
    """Syntax or validation error in the model expression language."""

    def __init__(self, message: str, span: tuple[int, int] = (0, 0), text: str = ""):
        super().__init__(message)
        self.span = span
        self.text = text

    @property
    def column(self) -> int:
        return self.span[0] + 1

    def __str__(self) -> str:
        msg = self.args[0]
        if self.text:
            caret = " " * self.span[0] + "^" * max(1, self.span[1] - self.span[0])
            return f"{msg} at column {self.column}\n  {self.text}\n  {caret}"
        return msg


class ModelError(JetLagrangeError):
    """A model document is invalid. Carries an optional (line, column) location."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        super().__init__(message)
        self.line = line
        self.column = column

    def __str__(self) -> str:
        if self.line is None:
            return self.args[0]
        col = f", column {self.column}" if self.column is not None else ""
        return f"line {self.line}{col}: {self.args[0]}"


class SymmetryConflictError(ModelError):
    pass


class AutonomyViolationError(ModelError):
    pass


class DegenerateMetricError(ModelError):
    pass
