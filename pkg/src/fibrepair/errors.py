"""Exception hierarchy.

Everything raised deliberately by the package derives from :class:`FibrePairError`,
split into configuration problems (bad input, unparsable files) and numerical
failures (no root in a bracket, singular formula). The CLI maps the two
branches onto distinct exit codes.
"""


class FibrePairError(Exception):
    """Base class for package errors."""


class ConfigError(FibrePairError, ValueError):
    """Invalid user input or configuration."""


class NumericalError(FibrePairError, ArithmeticError):
    """A computation could not produce a meaningful result."""


class RangeError(ConfigError):
    """Wavelength outside a model's declared validity interval."""


class ParseError(ConfigError):
    """Malformed data file. ``row`` is 1-based and counts the header line."""

    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class DomainError(ConfigError):
    """Argument outside the mathematical domain of an operation."""


class BracketError(NumericalError):
    """The search bracket does not contain a sign change."""


class DegenerateContinuumError(NumericalError):
    """Every point of the scan is a root (e.g. dispersionless fibre at zero power)."""


class SingularityError(NumericalError):
    """A formula would divide by zero."""


class SpanError(NumericalError):
    """The JSA grid does not capture enough of the main lobe."""


class FilterError(NumericalError):
    """Filter passband leaves nothing of the JSA."""


class NormalizationError(NumericalError):
    """An operation that needs a normalized JSA received one that is not."""


class ResampleError(NumericalError):
    """Two JSA grids cannot be brought onto a common signal axis."""


class DataError(NumericalError):
    """Measurement record cannot be inverted (e.g. zero total counts)."""
