"""Exception types shared across the package."""


class BkbmError(Exception):
    """Base class for package-specific errors."""


class PopulationCapExceeded(BkbmError, RuntimeError):
    """Raised when the alive-particle count of a replicate passes the cap.

    Carries the results completed before the overflow so callers can report
    partial output instead of losing the run.
    """

    def __init__(self, message, *, time=None, replicate=None, partial=None):
        super().__init__(message)
        self.time = time
        self.replicate = replicate
        self.partial = partial if partial is not None else []


class RegimeMismatchError(BkbmError, ValueError):
    """An expansion was requested on the wrong normalization branch."""


class DegenerateWeightsError(BkbmError, RuntimeError):
    """All importance weights vanished (every path was absorbed)."""
