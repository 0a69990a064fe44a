"""Exception types shared across the package.

The CLI maps these onto exit codes: usage errors exit 1, data errors
exit 2, numeric/contract failures exit 3.
"""


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class ContractError(RuntimeError):
    """A documented precondition was violated by the caller."""


class DataError(ValueError):
    """Input data is invalid (bad values, inconsistent panel, ...)."""


class ParseError(DataError):
    """A data file failed to parse; carries the offending line number."""

    def __init__(self, path: str, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


class NumericError(RuntimeError):
    """Training or evaluation produced a non-finite value."""


class UsageError(Exception):
    """Bad command-line invocation or malformed config."""
