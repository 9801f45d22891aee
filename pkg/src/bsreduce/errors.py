"""Exception types shared across the package."""


class BsduceError(Exception):
    """Base class for all package-specific errors."""


class InvalidInput(BsduceError, ValueError):
    """A numeric argument is outside its admissible range."""


class PayoffSyntaxError(BsduceError, ValueError):
    """Payoff text failed to parse.

    Attributes:
        offset: byte offset into the source string where parsing failed.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class UnknownSymbol(PayoffSyntaxError):
    """An identifier in the payoff text is not S0..S15 or max/min."""


class DomainError(BsduceError, ArithmeticError):
    """Evaluation hit a singular operation (division by zero, bad power base)."""


class NotSymmetric(BsduceError, ValueError):
    """Matrix asymmetry exceeds tolerance."""


class NotPSD(BsduceError, ValueError):
    """Matrix fails the positive-semidefinite tolerance."""


class PayoffNotReducible(BsduceError, ValueError):
    """Payoff is not a function of the requested product variable."""


class NotReducible(PayoffNotReducible):
    """Rewrite requested for a transform whose group structure does not hold."""


class NotHomogeneous(BsduceError, ValueError):
    """Payoff is not positively homogeneous of degree one."""


class NonDifferentiableKink(BsduceError, ValueError):
    """Finite-difference probes straddle a max/min kink even after jittering."""


class WeightsNotSimplex(InvalidInput):
    """Basket weights must be nonnegative and sum to one."""


class FactorizationFailure(BsduceError, ValueError):
    """Covariance matrix could not be factorized within PSD tolerance."""


class GridTooCoarse(BsduceError, RuntimeError):
    """Finite-difference error estimate exceeds the acceptable bound."""


class NoClosedForm(BsduceError, ValueError):
    """The reduced problem does not match any known closed-form pattern."""


class SchemaError(BsduceError, ValueError):
    """An input file failed schema validation."""
