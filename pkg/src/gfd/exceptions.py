"""Exception hierarchy shared by every module."""


class GfdError(Exception):
    """Base class for all errors raised by the package."""


class DomainError(GfdError, ValueError):
    """A parameter or probability lies outside its admissible range."""


class InputError(GfdError, ValueError):
    """Observations are malformed (wrong arity, non-finite, outside the support)."""


class DegenerateSampleError(GfdError):
    """The sample makes the requested Jacobian vanish or undefined."""


class ConvergenceError(GfdError, RuntimeError):
    """An iterative solver did not locate an interior solution."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class KinkError(GfdError):
    """A derivative was requested at a non-differentiability point."""

    def __init__(self, message, breakpoint):
        super().__init__(message)
        self.breakpoint = breakpoint


class NumericError(GfdError, ArithmeticError):
    """A numerical routine (quadrature, underflow guard) failed."""


class UnderflowError(NumericError):
    """A density value fell below the representable floor."""


class BuildError(GfdError):
    """The fiducial density could not be constructed."""


class NonRegularModelError(GfdError):
    """The operation needs a regular model (smooth likelihood, fixed support)."""


class ExperimentError(GfdError, RuntimeError):
    """A Monte Carlo experiment exceeded its failure budget."""
