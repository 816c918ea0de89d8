"""Exception types raised by the simulator."""


class ConfigError(ValueError):
    """A configuration violates one of its invariants."""


class CodeConstructionError(RuntimeError):
    """The LDPC code or its encoder could not be built."""


class NumericalFailure(FloatingPointError):
    """A message-passing recursion produced non-finite values."""

    def __init__(self, message, iteration=None):
        super().__init__(message if iteration is None else f"{message} (iteration {iteration})")
        self.iteration = iteration
