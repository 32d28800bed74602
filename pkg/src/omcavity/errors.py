"""Exception types shared across the package."""


class ValidationError(ValueError):
    """An input violates a documented invariant."""


class FitError(RuntimeError):
    """A fit failed to converge or the data cannot support it.

    ``diagnostics`` carries whatever the fitting routine knew at the point of
    failure (iteration trace, fitted values, messages).
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics if diagnostics is not None else {}
