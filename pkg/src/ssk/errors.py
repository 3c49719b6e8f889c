"""Exception hierarchy; each class carries the CLI exit code it maps to."""


class KernelError(Exception):
    """Base class for every failure raised by the kernel."""

    exit_code = 2


class PreconditionError(KernelError):
    exit_code = 2


class PrecisionExhausted(KernelError):
    exit_code = 3


class ParseError(KernelError):
    exit_code = 4


class DivisionByZero(PreconditionError, ZeroDivisionError):
    pass


class IncompatibleCyclotomicOrders(PreconditionError):
    pass


class NotAUnit(PreconditionError):
    pass


class CompositionNotNilpotent(PreconditionError):
    pass


class DimensionMismatch(PreconditionError):
    pass


class KindIncompatible(PreconditionError):
    pass


class GammaUndefined(PreconditionError):
    pass


class NotNilpotentShift(PreconditionError):
    pass


class SingularMatrix(PreconditionError):
    pass


class JacobianNotOne(PreconditionError):
    pass


class ValuationTooLow(PreconditionError):
    pass


class NotMonic(PreconditionError):
    pass


class GammaShapeMismatch(PreconditionError):
    pass


class NotCommuting(PreconditionError):
    pass


class NotQuasiElliptic(PreconditionError):
    pass


class SystemInconsistent(PreconditionError):
    pass


class HilbertViolation(PreconditionError):
    pass


class SupportNotFull(PreconditionError):
    pass


class NotStabilizing(PreconditionError):
    pass


class BudgetExhausted(PreconditionError):
    pass


class NotRegular(PreconditionError):
    pass


class OrderMismatch(PreconditionError):
    pass


class CompatibilityFailure(PreconditionError):
    pass


class VerificationFailed(KernelError):
    """An identity re-checked after a computation did not hold."""

    exit_code = 2
