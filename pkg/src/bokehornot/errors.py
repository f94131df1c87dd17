"""Exception types shared across the package."""


class BokehError(Exception):
    """Base class for all package errors."""


class ValidationError(BokehError, ValueError):
    """An input violated a documented precondition."""


class DimensionError(ValidationError):
    """Tensor shapes or spatial extents are incompatible."""


class ConfigError(ValidationError):
    """A configuration value is malformed or inconsistent."""


class LensNameError(ValidationError):
    """A lens identifier string does not follow the naming grammar."""

    def __init__(self, name, token, message):
        self.name = name
        self.token = token
        super().__init__(f"cannot parse lens name {name!r}: {message} (at {token!r})")


class UnknownBrandError(ValidationError):
    """A lens brand is not in the active registry."""

    def __init__(self, brand, registry):
        self.brand = brand
        self.registry = tuple(registry)
        super().__init__(f"unknown lens brand {brand!r}; known brands: {', '.join(self.registry)}")


class DatasetError(BokehError):
    """A dataset directory is incomplete or inconsistent."""


class TrainingError(BokehError, RuntimeError):
    """Training hit an unrecoverable numerical or I/O problem."""
