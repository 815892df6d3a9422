"""Exception types shared across the package."""


class MmkpError(Exception):
    """Base class for all package errors."""


class DimensionError(MmkpError):
    """Operand shapes are incompatible for the requested operation."""


class ContractError(MmkpError):
    """An operation was called outside its contract (bad state or arguments)."""


class EmptyBankError(MmkpError):
    """A memory bank with zero rows was supplied where rows are required."""


class ParseError(MmkpError):
    """A dataset line or file could not be parsed."""

    def __init__(self, message, line_no=None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class ValidationError(MmkpError):
    """Parsed data violates a declared invariant."""
