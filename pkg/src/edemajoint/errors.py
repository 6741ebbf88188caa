"""Exception hierarchy shared by every module."""


class EdemaJointError(Exception):
    """Base class for all package errors."""


class ParameterError(EdemaJointError, ValueError):
    """An argument is outside its documented range."""


class ConfigError(EdemaJointError, ValueError):
    """A configuration cannot be satisfied."""


class ShapeError(EdemaJointError, ValueError):
    """Operand shapes are incompatible."""


class NumericError(EdemaJointError, ArithmeticError):
    """A computation produced a non-finite value."""

    def __init__(self, op, message=None):
        self.op = op
        super().__init__(message or f"non-finite value produced by '{op}'")


class DegenerateInputError(EdemaJointError, ValueError):
    """Input is mathematically degenerate for the requested operation."""


class DegenerateLabelsError(DegenerateInputError):
    """Binary labels contain only one class."""


class EmptyDocumentError(EdemaJointError, ValueError):
    """A report is empty or whitespace-only."""


class EmptyClassificationError(EdemaJointError, ValueError):
    """A joint-phase batch carries no labeled member."""


class IntegrityError(EdemaJointError):
    """A persisted artifact is truncated, corrupt or of the wrong version."""
