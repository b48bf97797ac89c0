"""Exception hierarchy shared by every module of the package."""


class FedBatchError(ValueError):
    """Base class; subclasses ValueError so callers can catch either."""


class DomainError(FedBatchError):
    """An argument lies outside the mathematical domain of an operation."""


class InfeasibleBatchError(FedBatchError):
    """A global batch size violates the scaling-law floor or the B >= K floor."""


class RegimeError(FedBatchError):
    """An operation was called in the wrong latency regime (e.g. B <= B_th)."""


class UnderdeterminedError(FedBatchError):
    """Not enough distinct data to fit the scaling law."""


class InstanceTooLargeError(FedBatchError):
    """Brute-force enumeration refused because the instance is too big."""


class ConfigError(FedBatchError):
    """Invalid experiment configuration; ``key`` names the offending field."""

    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")
