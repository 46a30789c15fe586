"""Error taxonomy shared by the numerical modules and the CLI."""


class QewError(Exception):
    """Base class for workbench errors."""


class DomainError(QewError, ValueError):
    """Input lies outside the domain of the operation (degenerate metric, bad weight, ...)."""


class HypothesisViolated(QewError):
    """A theorem's hypotheses fail on the supplied data, so no verdict is issued."""


class ContractError(QewError):
    """An operation was called in a configuration it does not support."""


class NumericalError(QewError):
    """The computation broke down without a recognised singular pattern."""


class ConditioningWarning(UserWarning):
    """Finite-difference step is so small that roundoff dominates truncation."""


class ConfigError(QewError):
    """A scenario file cannot be parsed or does not match its schema."""
