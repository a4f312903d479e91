class ValidationError(ValueError):
    """Input violates a precondition (shape, symmetry, norm, parameter range)."""


class NumericError(ArithmeticError):
    """Non-finite values produced during evaluation or integration."""

    def __init__(self, message, last_time=None, location=None):
        super().__init__(message)
        self.last_time = last_time
        self.location = location
