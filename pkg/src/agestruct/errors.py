"""Exception types raised by the solvers."""


class InvalidArgument(ValueError):
    """Bad argument: nonpositive sizes, mismatched grids, wrong shapes."""


class PreconditionError(ValueError):
    """An input violates a mathematical precondition of the operation."""


class OutOfResolventSet(ValueError):
    pass


class StepSizeError(RuntimeError):
    """The semi-implicit boundary solve is not well posed at this step size.

    ``suggested_da`` carries an age step for which the solve would succeed.
    """

    def __init__(self, message, step=None, suggested_da=None):
        super().__init__(message)
        self.step = step
        self.suggested_da = suggested_da


class NoRootError(RuntimeError):
    """Characteristic equation has no root in the admissible range."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class DivergenceError(RuntimeError):
    def __init__(self, message, gaps=None):
        super().__init__(message)
        self.gaps = list(gaps or [])


class ConfigError(ValueError):
    """Scenario configuration rejected; ``path`` is a JSON pointer."""

    def __init__(self, message, path=""):
        super().__init__(f"{path or '/'}: {message}")
        self.path = path
