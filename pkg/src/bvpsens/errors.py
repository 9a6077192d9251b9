"""Exception hierarchy shared by every module of the package."""


class BVPSensError(Exception):
    """Base class for all errors raised by :mod:`bvpsens`."""


class ExprSyntaxError(BVPSensError):
    def __init__(self, message, offset):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class UnknownFunctionError(ExprSyntaxError):
    pass


class EvaluationError(BVPSensError):
    pass


class UnboundVariableError(EvaluationError):
    pass


class DomainError(EvaluationError):
    pass


class ProblemError(BVPSensError):
    """A problem description violates one of the structural constraints."""


class SolverFailure(BVPSensError):
    pass


class ExtensionFailure(SolverFailure):
    """The initial value problem could not be continued across the span.

    Raised on state blow-up, step-size underflow or a domain error of the
    right-hand side; the usual cause is a right-hand side whose solutions
    do not extend to the whole interval.
    """

    def __init__(self, message, x=None):
        super().__init__(message)
        self.x = x


class MaxIterations(SolverFailure):
    pass


class SingularJacobian(SolverFailure):
    pass


class DisconjugacyViolation(BVPSensError):
    """The boundary-functional matrix is numerically singular."""


class PerturbationInfeasible(BVPSensError):
    pass
