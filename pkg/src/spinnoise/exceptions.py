"""Exception hierarchy.

Every error raised on purpose by the package derives from
:class:`SpinNoiseError`.  Errors caused by bad caller input also derive from
:class:`ValueError` so ordinary ``except ValueError`` handlers keep working.
"""


class SpinNoiseError(Exception):
    """Base class for all package errors."""


class DomainError(SpinNoiseError, ValueError):
    """An argument lies outside the domain of the formula."""


class UsageError(SpinNoiseError, ValueError):
    """The call itself is malformed (empty grid, inverted range, ...)."""


class NumericalError(SpinNoiseError):
    """A computation could not produce a meaningful number."""


class InstabilityError(NumericalError):
    """Modified damping is non-positive: the oscillator self-oscillates."""

    def __init__(self, message, gamma_eff=None):
        super().__init__(message)
        self.gamma_eff = gamma_eff


class OverSofteningError(NumericalError):
    """The virtual frequency shift pushes the squared frequency below zero."""

    def __init__(self, message, critical_phi=None):
        super().__init__(message)
        self.critical_phi = critical_phi


class DivergenceError(NumericalError):
    """A normalization or response diverges at the requested point."""


class IndeterminateError(NumericalError):
    """The quantity requested is not defined for the given state."""


class FitError(NumericalError):
    """A least-squares fit failed to converge or had no usable signal."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class RankDeficiencyError(FitError):
    """The normal equations are singular for the requested free parameters."""

    def __init__(self, message, parameters=(), diagnostics=None):
        super().__init__(message, diagnostics)
        self.parameters = tuple(parameters)


class SpectrumFormatError(SpinNoiseError, ValueError):
    """A spectrum file could not be parsed."""

    def __init__(self, message, lineno=None):
        super().__init__(message)
        self.lineno = lineno
