"""Exception hierarchy shared by all modules.

Every error raised on bad input derives from :class:`MacrostateError`, so the
CLI can map it to exit status 1 without catching unrelated bugs.
"""


class MacrostateError(Exception):
    """Base class for data, shape and feasibility errors."""


class ParseError(MacrostateError):
    """A CSV row or period label could not be parsed."""


class ConflictError(MacrostateError):
    """Two sources supply different values for the same cell."""


class FormatError(MacrostateError):
    """Input violates the file format (mixed granularity, bad header, ...)."""


class AlignmentError(MacrostateError):
    pass


class UnknownFeatureError(MacrostateError, KeyError):
    def __str__(self):  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class DomainError(MacrostateError, ValueError):
    """A value lies outside the domain of the operation (e.g. log of a nonpositive price)."""


class InsufficientDataError(MacrostateError, ValueError):
    pass


class NormalizationError(MacrostateError, ValueError):
    pass


class DimensionError(MacrostateError, ValueError):
    pass


class DataError(MacrostateError, ValueError):
    """Missing or non-finite values where complete data is required."""


class KindError(MacrostateError, ValueError):
    """Matrix kind does not match the operation (similarity vs distance)."""


class ArgumentError(MacrostateError, ValueError):
    pass


class FeasibilityError(MacrostateError, ValueError):
    """Weight bounds admit no fully invested portfolio."""


class WindowError(MacrostateError):
    """A backtest window could not be optimised."""
