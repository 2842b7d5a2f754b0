"""Exception types shared across the toolkit."""


class DomainError(ValueError):
    """An input lies outside the domain where an operation is defined."""


class IntegrityError(RuntimeError):
    """A structural or geometric invariant was found to be violated."""


class MaskIntegrityError(IntegrityError):
    """A grid mask is inconsistent with the stencil used on it."""


class SetupError(ValueError):
    """An experiment was configured with inconsistent parameters."""


class ConfigError(ValueError):
    """A run configuration does not match the schema.

    ``line`` is the 1-based line in the config file, when known.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
