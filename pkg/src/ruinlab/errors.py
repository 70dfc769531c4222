"""Exception hierarchy shared by all modules.

The CLI maps :class:`DomainError` and :class:`ConfigurationError` to exit code 1
and :class:`LogicError` to exit code 2.
"""


class DomainError(ValueError):
    """An input lies outside the mathematical domain of an operation."""


class PreconditionError(DomainError):
    """A finiteness or applicability condition of an estimator fails."""


class ConfigurationError(ValueError):
    """Inconsistent or missing configuration, e.g. constants that do not match a regime."""


class LogicError(RuntimeError):
    """An internal consistency check failed; indicates a bug, not bad input."""
