"""Exception types shared across the package."""


class H3mError(Exception):
    """Base class for all h3mkit errors."""


class InvalidModelError(H3mError, ValueError):
    """A model violates its structural invariants (shapes, stochasticity,
    positive-definiteness) or two models are dimensionally incompatible."""


class DegenerateWeightsError(H3mError, ValueError):
    """A weight vector carries no mass (all zero, or all -inf in log domain)."""


class EstimationError(H3mError, RuntimeError):
    """An estimator cannot proceed, e.g. too few distinct observations for
    the requested number of components."""


class ModelFormatError(H3mError, ValueError):
    """A model or dataset file is malformed or has an unsupported schema."""
