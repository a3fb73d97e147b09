class DimensionError(ValueError):
    """Array shapes or lengths do not fit together."""


class ParameterError(ValueError):
    """A configuration value is outside its valid range."""


class FormatError(ValueError):
    """A file on disk is malformed, incompatible or of an unknown version."""


class ConvergenceError(RuntimeError):
    """The SVR solver hit its iteration budget before meeting the KKT tolerance."""

    def __init__(self, message, violation):
        super().__init__(message)
        self.violation = violation
