"""Exception hierarchy shared by all modules.

The CLI maps these onto process exit codes: infeasibility -> 2,
numerical failure -> 3, bad configuration -> 4.
"""


class WncsError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(WncsError, ValueError):
    """Malformed or inconsistent input data (dimensions, ranges, schema)."""


class DomainError(WncsError, ValueError):
    """A formula was evaluated outside the region where it is defined."""


class InfeasibleError(WncsError):
    """No admissible rate / power / LP point exists.

    ``binding`` names the bound that failed, when one can be identified.
    """

    def __init__(self, message, binding=None):
        super().__init__(message)
        self.binding = binding


class NumericalError(WncsError, ArithmeticError):
    """Iteration cap exceeded, degenerate pivot, NaN blow-up and similar."""


class NotHurwitzError(NumericalError):
    """State matrix has an eigenvalue with nonnegative real part."""


class DivergenceError(NumericalError):
    """A state or series became non-finite."""


class NotAsUgesError(WncsError, ValueError):
    """The contraction factor of a scheduling protocol reaches or exceeds one."""
