"""Exception types shared across the package.

The CLI maps these onto exit codes: configuration problems exit with 2,
solver/inversion failures with 3, infeasible optimizations with 4.
"""


class ConfigError(ValueError):
    """Invalid model parameters, schedules, or config files."""


class UnsupportedServiceError(ConfigError):
    """A solver path was asked to use a service law it cannot handle
    (e.g. a density where none exists, or an unbounded density at 0)."""


class ConvergenceError(RuntimeError):
    """Picard iteration failed to reach the residual tolerance."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class InversionError(RuntimeError):
    """Numerical Laplace inversion produced non-finite or unstable output."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
