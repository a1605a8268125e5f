"""Exception types shared across the library."""


class OcontrolError(Exception):
    """Base class for library-specific failures."""


class SingularObjectiveError(OcontrolError):
    """An objective weight matrix that must be invertible is singular.

    For unpenalized states or controls, drop rows of the measurement
    sensitivity instead of zeroing rows of the weight matrix.
    """


class NonMinimumError(OcontrolError):
    """An SQP-mode Hessian has a significantly negative eigenvalue."""


class SingularPriorError(OcontrolError):
    """A prior covariance inverse failed outside its positive-rank subspace.

    The inverse-free efficient controller avoids this path entirely.
    """


class UnstabilizableError(OcontrolError):
    """The Riccati recursion failed to converge to a stabilizing solution."""


class NonFiniteError(OcontrolError):
    """A dynamics or objective evaluation produced NaN or infinity."""
