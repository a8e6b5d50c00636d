"""Exception types shared across the solvers and the command line."""


class ConfigError(ValueError):
    """Scenario configuration failed to parse or validate."""


class DomainTooSmallError(RuntimeError):
    """The solution support reached the edge of the computational domain."""


class BlowupAbort(RuntimeError):
    """Non-finite particle positions or field values; blow-up suspected."""


class NonIntegrableKernelError(ValueError):
    """A kernel norm or tail integral does not converge."""


class ContractViolation(ValueError):
    """An operation was called outside its documented preconditions."""
