"""Exception types; the CLI maps each family to an exit code."""


class RDBNError(Exception):
    exit_code = 3


class ParameterError(RDBNError, ValueError):
    """An argument violates a documented precondition."""

    exit_code = 1


class DataError(RDBNError, ValueError):
    """Malformed or inconsistent input data."""

    exit_code = 2


class DegenerateError(RDBNError, ArithmeticError):
    """A distribution parameter collapsed (e.g. an all-zero concentration)."""


class ConsistencyError(RDBNError, RuntimeError):
    """An internal bookkeeping identity failed."""
