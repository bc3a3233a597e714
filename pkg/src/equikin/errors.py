"""Exception hierarchy.

Input problems derive from :class:`InputError`, numerical breakdowns from
:class:`NumericalError`; the CLI maps each family to its own exit code.
"""


class EquikinError(Exception):
    """Base class for all package errors."""


class InputError(EquikinError, ValueError):
    """Malformed, inconsistent or out-of-range input."""


class OutputError(EquikinError, OSError):
    """Report files could not be written."""


class NumericalError(EquikinError, ArithmeticError):
    """A computation could not produce a trustworthy result."""


class ChainConfigError(InputError):
    pass


class ParseError(InputError):
    pass


class AlignmentError(InputError):
    """Series that must share a time base do not."""


class NoContactError(InputError):
    pass


class MultipleContactError(InputError):
    pass


class DegenerateConfigurationError(NumericalError):
    """Point set is collinear or has too few valid points for a rigid fit."""


class GapTooLongError(NumericalError):
    pass


class SingularAttitudeError(NumericalError):
    pass


class IntegrationDivergenceError(NumericalError):
    pass
