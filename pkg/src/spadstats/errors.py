"""Exception hierarchy shared by all spadstats modules."""


class SpadStatsError(Exception):
    """Base class for every error raised by this package."""


class DomainError(SpadStatsError, ValueError):
    """An argument lies outside the domain of the operation."""


class ModelError(SpadStatsError, ValueError):
    """An afterpulse model produced an invalid per-slot probability."""


class ConvergenceError(SpadStatsError, RuntimeError):
    """A series did not reach the requested tolerance within the term cap."""


class FitError(SpadStatsError):
    """A regression could not be performed on the supplied data."""


class FitQualityError(FitError):
    """A regression ran but produced a physically meaningless result."""


class DataError(SpadStatsError, ValueError):
    """Input data violates a structural requirement (e.g. monotonic ticks)."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class FormatError(SpadStatsError):
    """A file does not conform to its declared on-disk format."""


class TagFormatError(FormatError):
    def __init__(self, message, offset=None):
        super().__init__(message)
        self.offset = offset


class HistogramParseError(FormatError):
    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line


class ReportSchemaError(FormatError):
    def __init__(self, message, version=None):
        super().__init__(message)
        self.version = version
