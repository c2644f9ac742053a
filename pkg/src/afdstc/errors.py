"""Exception and warning types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of a function."""


class ConfigError(ValueError):
    """A network, modulation or experiment description is invalid."""


class ContractError(ValueError):
    """Inputs are individually valid but mutually inconsistent."""


class CapabilityError(ValueError):
    """The requested quantity is not available for this network shape or scheme."""


class ConvergenceError(ArithmeticError):
    """Numerical integration failed to reach the requested tolerance.

    The best available estimate and its error bound are attached so callers
    can decide whether a degraded answer is acceptable.
    """

    def __init__(self, message, estimate, error):
        super().__init__(f"{message} (estimate={estimate!r}, error={error!r})")
        self.estimate = estimate
        self.error = error


class PrecisionWarning(UserWarning):
    """A result was computed, but with reduced numerical reliability."""
