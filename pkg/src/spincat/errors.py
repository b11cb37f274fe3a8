"""Exception types raised across the package."""


class SpincatError(Exception):
    """Base class for all package errors."""


class InvalidSpinError(SpincatError, ValueError):
    """Spin quantum number is not a non-negative half-integer."""


class PrefactorSingularityError(SpincatError, ValueError):
    """An anisotropy term is requested at a spin where its prefactor diverges."""


class ContractViolationError(SpincatError, ValueError):
    """Input violates a documented precondition (e.g. non-Hermitian matrix)."""


class ReductionNotApplicableError(SpincatError, ValueError):
    """The one-dimensional reduction needs the field in the xz-plane."""


class InvalidEnvironmentError(SpincatError, ValueError):
    """Phonon environment parameters are unphysical."""


class DegenerateKernelError(SpincatError, ArithmeticError):
    """Rate matrix has more than one numerically-zero eigenvalue."""


class DegenerateLevelError(SpincatError, ArithmeticError):
    """Two levels are degenerate where a perturbative sum needs a gap."""

    def __init__(self, message, pair=None):
        super().__init__(message)
        self.pair = pair


class IntegrationError(SpincatError, RuntimeError):
    """Master-equation integration failed; carries the last good state."""

    def __init__(self, message, last_state=None):
        super().__init__(message)
        self.last_state = last_state


class NotFoundError(SpincatError, RuntimeError):
    """Iterative search did not converge; carries the best residual."""

    def __init__(self, message, residual=None, best=None):
        super().__init__(message)
        self.residual = residual
        self.best = best


class BracketError(SpincatError, ValueError):
    """Bracket does not contain an interior minimum."""


class ConfigError(SpincatError, ValueError):
    """Scenario configuration is invalid or incomplete."""
