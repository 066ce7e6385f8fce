"""Exception hierarchy shared by every module of the package."""


class ChazyCurzonError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(ChazyCurzonError, ValueError):
    """Evaluation point lies outside the domain of a formula."""


class SingularityError(DomainError):
    """An orbit approached the curvature singularity at r = 0."""


class SingularParameterError(ChazyCurzonError, ValueError):
    """A closed-form expression is singular at the requested parameter."""


class DegenerateSystemError(ChazyCurzonError, ArithmeticError):
    """A linear system is too close to singular to solve reliably."""


class EscapeError(ChazyCurzonError, ArithmeticError):
    """An orbit left the configured escape bounds."""


class StepFailureError(ChazyCurzonError, ArithmeticError):
    """The adaptive integrator could not take an acceptable step."""


class NoCrossingError(ChazyCurzonError, ArithmeticError):
    """No surface-of-section crossing was found before the time limit."""


class ConvergenceError(ChazyCurzonError, ArithmeticError):
    """An iterative refinement or quadrature did not converge."""


class NoBracketError(ChazyCurzonError, ArithmeticError):
    """A root could not be bracketed (e.g. the orbit is unbounded)."""


class InsufficientDataError(ChazyCurzonError, ValueError):
    """Too few samples, or too narrow a range, for the requested estimate."""


class DegenerateGeometryError(ChazyCurzonError, ValueError):
    """Section points are coincident or collinear."""


class NonDivergentError(ChazyCurzonError, ArithmeticError):
    """Period data show no logarithmic growth."""


class ConfigError(ChazyCurzonError, ValueError):
    """Invalid run configuration (unknown key, bad value, missing version)."""


#: errors that the CLI maps to exit code 2
NUMERICAL_ERRORS = (
    DomainError,
    SingularParameterError,
    DegenerateSystemError,
    EscapeError,
    StepFailureError,
    NoCrossingError,
    ConvergenceError,
    NoBracketError,
    InsufficientDataError,
    DegenerateGeometryError,
    NonDivergentError,
)
