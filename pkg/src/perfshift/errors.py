"""Exception hierarchy.

Every error raised on a contract violation derives from :class:`PerfShiftError`,
which is itself a ``ValueError`` so callers that only care about bad input can
catch the builtin.
"""


class PerfShiftError(ValueError):
    """Base class for all validation errors raised by this package."""


class EmptySeriesError(PerfShiftError):
    pass


class NonBinaryValueError(PerfShiftError):
    pass


class SeriesTooShortError(PerfShiftError):
    pass


class WindowTooLargeError(PerfShiftError):
    pass


class NegativeLatentVarianceError(PerfShiftError):
    """Observed spread across players is below what sampling noise alone produces."""


class UnstableMetricError(PerfShiftError):
    """Latent spread is zero, so no finite stabilization point exists."""


class TooFewPlayersError(PerfShiftError):
    pass


class OutOfBoundsError(PerfShiftError):
    pass


class DegenerateTableError(PerfShiftError):
    pass


class EmptySampleError(PerfShiftError):
    pass


class DuplicateEntityError(PerfShiftError):
    pass


class ConfigError(PerfShiftError):
    pass


class MissingColumnError(PerfShiftError):
    pass


class UnknownEntityError(PerfShiftError):
    pass
