"""Exception types raised across the package."""


class StarError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(StarError):
    """Operand shapes are incompatible with the requested operation."""


class NumericError(StarError):
    """A computation produced non-finite values or divided by zero."""


class OutOfBoundsError(StarError):
    """An integer index vector addresses rows outside its target."""


class TapeError(StarError):
    """Backward was asked for a loss the tape never recorded."""


class GraphError(StarError):
    """A skeleton topology violates the tree invariants."""


class DataFormatError(StarError):
    """An external file or batch does not match its documented layout."""


class ConfigError(StarError):
    """A configuration value is out of its allowed range."""
