"""Exception hierarchy shared across the toolkit.

Each class maps to one CLI exit-code category so failures stay
distinguishable all the way out to the shell.
"""


class MdtcError(Exception):
    """Base class for all toolkit errors."""


class ShapeError(MdtcError):
    """Tensor dimensions incompatible with the requested operation."""


class ConfigError(MdtcError):
    """Invalid or inconsistent configuration value."""


class UsageError(MdtcError):
    """An API called outside its contract (bad argument, wrong mode)."""


class DataError(MdtcError):
    """Malformed dataset file; message carries file and line number."""


class NumericError(MdtcError):
    """A loss term became non-finite during training."""
