"""Exception types shared across the package."""


class InvalidParameterError(ValueError):
    pass


class DivergenceError(FloatingPointError):
    """Non-finite iterate; carries the iteration at which it appeared."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class UnsupportedLossError(ValueError):
    pass


class GenerationError(RuntimeError):
    pass


class TuningError(RuntimeError):
    def __init__(self, message, scores=()):
        super().__init__(message)
        self.scores = list(scores)
