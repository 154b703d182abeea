"""Exception types shared across the package."""


class RFMLError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(RFMLError, ValueError):
    pass


class InvalidDataError(RFMLError, ValueError):
    pass


class NumericalError(RFMLError, ArithmeticError):
    pass


class FlowDivergenceError(NumericalError):
    """Raised when a patch flow produces non-finite values."""

    def __init__(self, patch_index, iteration, message=None):
        self.patch_index = patch_index
        self.iteration = iteration
        msg = message or "non-finite values"
        super().__init__(f"flow diverged on patch {patch_index} at iteration {iteration}: {msg}")


class NotReducibleError(RFMLError):
    """The estimated intrinsic dimension equals the ambient dimension."""


class DisconnectedGraphError(RFMLError):
    def __init__(self, n_components):
        self.n_components = n_components
        super().__init__(f"neighborhood graph is disconnected ({n_components} components)")


class ParseError(RFMLError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
