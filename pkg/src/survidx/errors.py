"""Exception hierarchy shared by all survidx modules.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
NumericalError -> 4.
"""


class SurvidxError(Exception):
    """Base class for all survidx errors."""


class ConfigError(SurvidxError):
    """Invalid configuration file, key, or value."""


class DataError(SurvidxError):
    """Malformed or inconsistent input data (frames, masks, files)."""


class NumericalError(SurvidxError):
    """A numerical procedure failed to converge or degenerated."""


class DegenerateRegionError(NumericalError):
    """A level-set region emptied out; its mean is undefined."""
