"""Exception hierarchy shared across the toolkit."""


class DawnetError(Exception):
    """Base class for all dawnet-specific failures."""


class ConfigError(DawnetError, ValueError):
    """Invalid configuration value or combination."""


class ShapeError(DawnetError, ValueError):
    """Array arguments with incompatible shapes."""


class NumericalError(DawnetError, ArithmeticError):
    """NaN/Inf detected where finite values are required."""


class GenerationError(DawnetError, RuntimeError):
    """Dataset synthesis could not satisfy its quota within budget."""


class FormatError(DawnetError, ValueError):
    """Corrupt or unsupported binary artifact.

    ``offset`` is the byte offset at which parsing failed, when known.
    """

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset
