"""Exception hierarchy shared by all listmrt modules."""


class ListmrtError(Exception):
    """Base class for every error raised by this package."""


class DomainError(ListmrtError, ValueError):
    """An input violates a documented precondition (bad probability, shape, range)."""


class LoadError(ListmrtError):
    """A data file could not be parsed or validated; message names the defect and row."""


class IdentificationError(ListmrtError):
    """The requested estimation problem is not identified (e.g. too few items)."""


class EstimationError(ListmrtError):
    """An estimator failed to produce a usable result."""


class DecompositionError(EstimationError):
    """The eigendecomposition step failed (complex eigenvalues or singular matrices)."""


class NearDegenerateError(DecompositionError):
    """Eigenvalues are (numerically) repeated, so latent classes cannot be separated."""


class DesignError(ListmrtError):
    """A simulation design is infeasible as configured."""


class InferenceError(ListmrtError):
    """Resampling-based inference is unreliable on this sample (too many failures)."""
