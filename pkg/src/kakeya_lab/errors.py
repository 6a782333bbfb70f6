"""Exception types shared across the package.

The CLI maps these onto exit codes: ``KakeyaLabError`` subclasses exit 1,
I/O problems exit 2, argument parsing exits 64.
"""


class KakeyaLabError(Exception):
    """Base class for all errors raised by kakeya-lab operations."""


class PreconditionError(KakeyaLabError, ValueError):
    """An operation was called with inputs that violate its contract."""


class LineInZeroSet(KakeyaLabError):
    """A line restriction was identically zero, so root counting is undefined.

    Carries the offending coefficient vector in ``coeffs`` when available.
    """

    def __init__(self, message="restriction is identically zero", coeffs=None):
        super().__init__(message)
        self.coeffs = coeffs


class DegradedConditioningError(KakeyaLabError):
    """A fitted kernel vector failed its residual check.

    Raised instead of returning a polynomial whose vanishing/mean-zero
    residuals exceed tolerance; the caller should reduce the degree or the
    constraint count.
    """


class SingularSurfaceError(KakeyaLabError):
    """The gradient vanished (|grad P| below tolerance) at a surface point."""


class ProjectionError(KakeyaLabError):
    """Newton projection onto the zero set failed to converge."""


class ReportIOError(Exception):
    """An input or output artifact could not be read, parsed, or written.

    Deliberately not a ``KakeyaLabError``: the CLI maps it to exit code 2
    (I/O) rather than 1 (precondition).
    """
