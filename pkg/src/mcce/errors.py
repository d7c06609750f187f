"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Bad inputs: shapes, schemas, labels, flags, or file contents."""


class NumericalError(RuntimeError):
    """A numerical routine failed to produce a usable result."""
