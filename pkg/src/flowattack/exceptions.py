"""Exception types shared across the package."""


class ContractError(ValueError):
    """An argument violates an operation's preconditions (shape, range, ...)."""


class DomainError(ValueError):
    """A numeric function was evaluated outside its domain."""


class NumericError(FloatingPointError):
    """A computation produced non-finite values.

    ``block`` carries the index of the offending flow block when known.
    """

    def __init__(self, message, block=None):
        super().__init__(message if block is None else f"block {block}: {message}")
        self.block = block


class BudgetExhausted(RuntimeError):
    """The query oracle refused a query because its budget is spent."""


class ParseError(ValueError):
    """A binary file could not be decoded.  ``offset`` is the failing byte offset."""

    def __init__(self, message, offset=None):
        super().__init__(message if offset is None else f"{message} (offset {offset})")
        self.offset = offset


class CheckpointError(ValueError):
    """A checkpoint could not be loaded.  ``field`` names the failing header field."""

    def __init__(self, message, field=None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field


class ConfigError(ValueError):
    """Invalid run configuration."""
