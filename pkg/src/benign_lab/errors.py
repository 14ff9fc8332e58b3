"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid configuration or argument."""


class DimensionError(ValueError):
    """Array shapes do not line up."""


class DivergenceError(RuntimeError):
    """Gradient descent left the descent regime.

    ``context`` carries the diagnostic dump (step, losses, norms) and
    ``trajectory`` the records collected before the abort.
    """

    def __init__(self, message, context=None, trajectory=None):
        super().__init__(message)
        self.context = dict(context or {})
        self.trajectory = trajectory


class NonFiniteError(DivergenceError):
    """NaN or Inf appeared in the gradient or the weights."""


class OracleTooLarge(ValueError):
    """Instance exceeds the size cap of a brute-force oracle."""
