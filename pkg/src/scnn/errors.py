"""Exception types shared across the package.

The CLI maps these onto exit codes: usage errors exit 1, ValidationError
(bad inputs, malformed files) exits 2, NumericError (non-finite values,
failed internal consistency checks) exits 3.
"""


class ValidationError(ValueError):
    """Raised for invalid arguments, malformed files, or inconsistent inputs."""


class ParseError(ValidationError):
    """Malformed binary or text input.

    Carries the byte (or line) offset of the first offending field when known.
    """

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at offset {offset})"
        super().__init__(message)
        self.offset = offset


class NumericError(ArithmeticError):
    """Raised when a computation produces non-finite or inconsistent values."""


class UndefinedMetricError(ValidationError):
    """Raised when a requested metric is undefined for the given inputs."""
