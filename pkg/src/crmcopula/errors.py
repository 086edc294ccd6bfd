"""Exception types raised across the package."""


class CRMError(Exception):
    """Base class for all package errors."""


class DomainError(CRMError, ValueError):
    """An argument lies outside the domain of a function or distribution."""


class SingularMatrix(CRMError, ArithmeticError):
    pass


class NotPositiveDefinite(CRMError, ArithmeticError):
    pass


class DegenerateFrequency(CRMError, ValueError):
    """The frequency law puts (numerically) all mass at zero."""


class NonPositiveMass(CRMError, ArithmeticError):
    """A probability mass that must be positive evaluated to <= 0.

    ``policy_id`` is filled in when the failure is traced back to a record.
    """

    def __init__(self, message, policy_id=None):
        super().__init__(message)
        self.policy_id = policy_id


class NonConvergence(CRMError, RuntimeError):
    pass


class SingularHessian(CRMError, ArithmeticError):
    pass


class NonFiniteEvaluation(CRMError, ArithmeticError):
    pass


class InputParseError(CRMError, ValueError):
    """Malformed input file; carries the offending row/column when known."""

    def __init__(self, message, row=None, column=None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.row = row
        self.column = column


class SchemaError(CRMError, ValueError):
    """Input files parse but violate the claims-data schema."""
