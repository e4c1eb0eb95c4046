"""Exception types shared across the workbench."""


class WorkbenchError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(WorkbenchError):
    """Tensor shapes are incompatible for the requested operation."""


class ConfigError(WorkbenchError):
    """A configuration value is missing, unknown, or out of range."""


class ContractError(WorkbenchError):
    """An operation was called outside its stated preconditions."""


class ParseError(WorkbenchError):
    """Input text or bytes could not be parsed.

    ``position`` is a character/byte offset when known, ``path`` a
    structural path (e.g. ``layers[2].kind`` or ``[1]``) when known.
    """

    def __init__(self, message, position=None, path=None):
        super().__init__(message)
        self.position = position
        self.path = path


class EditRejected(WorkbenchError):
    """A model edit could not be applied; carries the validation report."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class UnsupportedConstructError(WorkbenchError):
    """Code generation has no mapping for a model construct."""
