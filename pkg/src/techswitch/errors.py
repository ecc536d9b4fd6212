"""Exception types shared across the package."""


class TechSwitchError(Exception):
    """Base class for all package errors."""


class SpecValidationError(TechSwitchError):
    """Problem instance violates one or more standing conditions.

    ``violations`` is a list of ``(code, message)`` pairs; codes are stable
    identifiers such as ``NonPositiveBeta`` or ``IntegrabilityViolation``.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        lines = "; ".join(f"{code}: {msg}" for code, msg in self.violations)
        super().__init__(f"invalid problem instance ({lines})")

    @property
    def codes(self):
        return [code for code, _ in self.violations]


class ParameterOutOfBox(TechSwitchError):
    """Jump-mean parameter outside the admissible closed interval."""


class GridEscape(TechSwitchError):
    """Simulated path left the truncation domain of a stop region."""


class NoConvergence(TechSwitchError):
    """Fixed-point iteration failed to reach tolerance within max_iter."""

    def __init__(self, residual, iterations, tol):
        self.residual = residual
        self.iterations = iterations
        self.tol = tol
        super().__init__(
            f"residual {residual:.3e} above tol {tol:.3e} "
            f"after {iterations} iterations"
        )


class StateOutOfGrid(TechSwitchError):
    """Strategy queried at a state outside the solved grid bounds."""


class UnreachableRegime(TechSwitchError):
    """Impulse targets a regime with zero switch probability."""


class MissingFields(TechSwitchError):
    """Operation needs solved value fields that were not supplied."""


class InsufficientPaths(TechSwitchError):
    """Monte Carlo estimate requested with fewer than two paths."""


class UnsupportedDynamics(TechSwitchError):
    """Cadence gain series needs constant drift and volatility."""


class UnboundedTailBound(TechSwitchError):
    """No finite tail bound exists for the requested series instance."""
