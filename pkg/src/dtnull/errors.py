"""Exception hierarchy shared by the library and the CLI."""


class DTNullError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(DTNullError, ValueError):
    pass


class InvalidConfigError(DTNullError, ValueError):
    pass


class BudgetError(DTNullError, RuntimeError):
    """A real-measurement or enumeration budget would be exceeded."""


class StateError(DTNullError, RuntimeError):
    """An object is used before it is ready (e.g. an untrained predictor)."""


class DegenerateInputError(DTNullError, ValueError):
    pass
