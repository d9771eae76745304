"""Exception hierarchy shared by all netmor modules."""


class NetmorError(Exception):
    """Base class for every error raised by netmor."""


class DimensionError(NetmorError, ValueError):
    pass


class SingularPencilError(NetmorError):
    pass


class SingularShiftError(NetmorError):
    """A shifted matrix ``sE - A`` is numerically singular."""

    def __init__(self, message, s=None):
        super().__init__(message)
        self.s = s


class NonphysicalPressureError(NetmorError):
    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class TopologyError(NetmorError, ValueError):
    pass


class HigherIndexError(NetmorError):
    pass


class RankDeficiencyError(NetmorError):
    pass


class DivergenceError(NetmorError):
    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class ConfigError(NetmorError, ValueError):
    """Malformed or invalid configuration file."""

    def __init__(self, message, line=None, key=None):
        super().__init__(message)
        self.line = line
        self.key = key
