"""Exception types shared across the runtime."""


class ShapeError(ValueError):
    """Layer arity or stream length does not fit the operation."""


class StateError(RuntimeError):
    """A conversation or session is in the wrong state for the call."""


class ConfigError(ValueError):
    """Missing or invalid runtime configuration."""


class ParseError(ValueError):
    """A token span or message could not be parsed.

    ``raw`` keeps the offending text so callers can log or echo it back.
    """

    def __init__(self, message, raw=None):
        super().__init__(message)
        self.raw = raw


class DomainError(ValueError):
    """A metric was asked for over an empty or invalid domain."""


class DataError(ValueError):
    """An evaluation record holds a value outside its allowed set."""


class ToolNotFoundError(KeyError):
    """No tool is registered under the requested name."""

    def __init__(self, name):
        super().__init__(name)
        self.name = name
