class InvalidInputError(ValueError):
    pass


class ConfigError(ValueError):
    pass


class DegenerateInputError(ValueError):
    pass


class DivergenceError(FloatingPointError):
    """A run produced a non-finite value.

    ``step`` is the index at which it happened; ``partial`` carries whatever
    traces had been collected so far (may be None).
    """

    def __init__(self, message, step=None, value=None, partial=None):
        super().__init__(message)
        self.step = step
        self.value = value
        self.partial = partial
