"""Exception types shared across the library."""


class InputError(ValueError):
    """An operation received arguments outside its contract."""


class ConfigError(ValueError):
    """A configuration is internally inconsistent or incompatible with the data."""


class IngestionError(ValueError):
    """A dataset file could not be parsed; the message names the offending cell/row."""


class SplitError(RuntimeError):
    """No class-covering train/test split could be drawn within the retry budget."""
