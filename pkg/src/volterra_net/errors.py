"""Exception types raised across the package.

Everything derives from VolterraNetError so callers can catch one base
class at an API boundary.  The CLI maps subfamilies to exit codes:
configuration problems, numerical failures and I/O problems each get
their own code.
"""


class VolterraNetError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(VolterraNetError):
    """An argument violates a documented precondition."""


class NonPositiveInput(ValidationError):
    """A quantity that must be strictly positive was zero or negative."""


class BadDims(ValidationError):
    """Model or problem dimensions are inconsistent or out of range."""


class DimMismatch(ValidationError):
    """Two objects that must share dimensions do not."""


class ShapeMismatch(ValidationError):
    """An array has the wrong shape for the requested operation."""


class GridMismatch(ValidationError):
    """Data lives on a different time grid than the consumer requires."""


class IncommensurateGrid(ValidationError):
    """A grid refinement/coarsening factor does not divide the step count."""


class IndivisibleFactor(IncommensurateGrid):
    """Alias kept separate so callers can distinguish factor errors."""


class ConfigParseError(ValidationError):
    """A run configuration contains an unknown key or unusable value."""


class NumericalError(VolterraNetError):
    """Base class for failures detected while computing."""


class SingularAtZero(NumericalError):
    """A singular kernel was evaluated at lag zero."""


class NonFinitePath(NumericalError):
    """A simulated path produced NaN or infinity.

    Attributes
    ----------
    node : int
        Index of the first grid node with a non-finite value.
    """

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class ZeroTargetNorm(NumericalError):
    """A relative error was requested against a (near-)zero target path."""


class NonScalarLoss(NumericalError):
    """Backpropagation was started from a node that is not a scalar."""


class DivergedLoss(NumericalError):
    """Training loss became non-finite or exceeded the divergence guard."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class DegenerateFit(NumericalError):
    """Too few usable points remained to fit a log-log slope."""


class OutputExists(VolterraNetError):
    """A run directory already exists and --force was not given."""
