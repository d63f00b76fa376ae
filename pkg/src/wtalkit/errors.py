"""Exception types shared across the toolkit."""


class ConfigError(ValueError):
    """Bad configuration file or unknown/invalid option."""


class DataFormatError(ValueError):
    """Corrupt or incompatible on-disk data.

    `offset` is the byte offset at which the problem was detected, when known.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class NumericError(ArithmeticError):
    """Non-finite values or a failed numeric check."""
