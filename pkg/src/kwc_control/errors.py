"""Exception hierarchy shared by all solver modules."""


class KwcError(Exception):
    """Base class for all toolkit errors."""


class ShapeError(KwcError):
    """Array shapes do not match the owning grid."""


class ConfigurationError(KwcError):
    """A run configuration or parameter set violates a precondition."""


class CoefficientClassError(KwcError):
    """A sextuplet fails membership in the admissible coefficient class."""


class SubdifferentialPointError(KwcError):
    """Derivative of the sharp interface potential requested at its kink.

    At eps == 0 and slope == 0 the flux is set-valued; callers must use a
    sign selection instead of a pointwise derivative.
    """


class NumericalError(KwcError):
    """An inner iteration or linear solve failed beyond the retry budget."""
