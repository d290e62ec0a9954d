"""Exception hierarchy shared by every module."""


class PromptcastError(Exception):
    pass


class DimensionError(PromptcastError, ValueError):
    """Shapes that cannot be combined."""


class ContractError(PromptcastError, ValueError):
    """A documented precondition was violated by the caller."""


class ConfigError(PromptcastError, ValueError):
    pass


class InputError(PromptcastError, ValueError):
    """Bad user data: empty files, NaNs, too-short series."""


class NumericFault(PromptcastError, ArithmeticError):
    """Non-finite values appeared during a forward or optimizer step."""


class DivergenceError(PromptcastError, RuntimeError):
    """Training loss exploded; carries the history recorded so far."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history
