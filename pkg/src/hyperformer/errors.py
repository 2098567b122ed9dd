"""Exception types shared across the package."""


class HyperFormerError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(HyperFormerError, ValueError):
    """Shape mismatch between two operands."""

    def __init__(self, what, left, right):
        super().__init__(f"{what}: incompatible shapes {tuple(left)} vs {tuple(right)}")
        self.left = tuple(left)
        self.right = tuple(right)


class EmptyInputError(HyperFormerError, ValueError):
    """An operation received an empty collection it cannot handle."""


class ParseError(HyperFormerError, ValueError):
    """Malformed dataset / vocabulary / config text."""

    def __init__(self, message, line_number=None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class ConfigError(HyperFormerError, ValueError):
    """Invalid configuration value; the message names the offending field."""
