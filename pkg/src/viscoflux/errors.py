"""Error taxonomy shared across the package.

Four classes of failure are distinguished so the command line runner can map
them onto exit codes: bad inputs or parameter combinations that violate a
documented precondition (configuration), arguments outside a function's
mathematical domain (domain), trouble detected while a computation is running
(integrity, e.g. NaN appearing in a state), and combinations of options that
are individually valid but unsupported together.
"""


class ConfigurationError(ValueError):
    """A parameter set or config file violates a documented precondition."""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class IntegrityError(RuntimeError):
    """A running computation produced an invalid state (NaN, Inf, ...)."""


class UnsupportedCombination(ConfigurationError):
    """Individually valid options that cannot be used together."""
