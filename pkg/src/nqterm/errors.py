"""Exception hierarchy shared by the analyses and the CLI exit-code mapping."""


class NQTermError(Exception):
    """Base class for all errors raised by nqterm."""

    exit_code = 1


class ValidationError(NQTermError, ValueError):
    """Malformed input: wrong shapes, non-Hermitian operators, bad files."""

    exit_code = 2


class PreconditionError(NQTermError, ValueError):
    """Well-formed input that violates an operation's precondition."""

    exit_code = 3


class InconsistencyError(NQTermError, RuntimeError):
    """An internal invariant failed, usually because of tolerance settings."""

    exit_code = 5
