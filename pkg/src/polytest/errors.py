"""Exception types shared across the package."""


class PolytestError(Exception):
    """Base class for all errors raised by this package."""


class InputError(PolytestError):
    """Malformed or inconsistent user input (files, shapes, flag values)."""


class ConfigurationError(PolytestError):
    """A configuration that the implementation refuses, e.g. kernel order above the cap."""


class DegenerateConstraintError(PolytestError):
    """A constraint coordinate has zero empirical variance and cannot be studentized.

    This typically means the kernel coordinate is constant on the data, so the
    coordinate carries no information and silently dropping it would change the
    number of constraints under test.
    """

    def __init__(self, label: str):
        self.label = label
        super().__init__(f"constraint {label!r} has zero empirical variance")


class NotPositiveDefiniteError(PolytestError):
    """A covariance matrix failed its Cholesky factorization.

    ``smallest_eig`` carries the smallest eigenvalue of the offending matrix as
    a diagnostic for how far from positive definite it is.
    """

    def __init__(self, message: str, smallest_eig: float | None = None):
        self.smallest_eig = smallest_eig
        if smallest_eig is not None:
            message = f"{message} (smallest eigenvalue {smallest_eig:.3e})"
        super().__init__(message)
