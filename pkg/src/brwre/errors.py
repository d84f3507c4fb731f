"""Exception hierarchy.

Validation failures map to CLI exit code 2, budget guards to exit code 3.
"""


class BrwreError(Exception):
    pass


class ValidationError(BrwreError, ValueError):
    """An input violates a structural invariant."""


class DuplicateEdge(ValidationError):
    pass


class DanglingType(ValidationError):
    pass


class Disconnected(ValidationError):
    pass


class NonpositiveRho(ValidationError):
    pass


class NotShiftInvariant(ValidationError):
    pass


class NotIrreducible(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class PreconditionViolated(ValidationError):
    pass


class EmptyPath(ValidationError):
    pass


class LengthMismatch(ValidationError):
    pass


class DomainError(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


class BudgetExceeded(BrwreError):
    """A brute-force or dynamic-programming guard was hit."""


class TooLarge(BudgetExceeded):
    pass


class DPBudgetExceeded(BudgetExceeded):
    def __init__(self, attempted, budget):
        super().__init__(
            f"DP state count {attempted} exceeds budget {budget}")
        self.attempted = attempted
        self.budget = budget


class EnumerationTooLarge(BudgetExceeded):
    pass
