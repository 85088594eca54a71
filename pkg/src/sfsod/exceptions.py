"""Exception types raised across the package."""


class SfsodError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(SfsodError, ValueError):
    pass


class InvalidProblem(SfsodError, ValueError):
    pass


class ZeroMadColumn(SfsodError, ValueError):
    """A design column has zero median absolute deviation and cannot be scaled."""

    def __init__(self, column, name=None):
        self.column = column
        self.name = name
        label = name if name is not None else f"column {column}"
        super().__init__(
            f"{label} has zero median absolute deviation; drop it before fitting"
        )


class RankDeficient(SfsodError, ValueError):
    pass


class EmptyEnsemble(SfsodError, ValueError):
    pass


class Infeasible(SfsodError):
    pass


class NoUndecided(SfsodError):
    pass


class FoldTooSmall(SfsodError, ValueError):
    pass


class InvalidConfig(SfsodError, ValueError):
    """Configuration value outside its allowed range.

    ``field`` carries the dotted path of the offending entry, e.g.
    ``"scenario.snr"``.
    """

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class DegenerateScaleWarning(UserWarning):
    """Training residual scale is zero, so scaled errors are undefined."""
