"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside its mathematical domain."""


class ConfigurationError(ValueError):
    """A configuration value is structurally invalid or unsupported."""


class UnsupportedModelError(TypeError):
    """The operation requires a distribution kind the given model is not."""


class SizeError(ValueError):
    """The requested instance is too large for an exact computation."""


class FitError(RuntimeError):
    """Log-log exponent fit is not applicable to the given series.

    Carries ``flatness``, a z-score of the growth between the first and last
    series points, so callers can report a bounded-regret regime instead.
    """

    def __init__(self, message: str, flatness: float | None = None):
        super().__init__(message)
        self.flatness = flatness


class CouplingError(RuntimeError):
    """A pathwise coupling identity or bound failed beyond tolerance."""
