"""Shooting solver and boundary-data sensitivities for nth-order multipoint
boundary value problems with an integral boundary condition."""

from .errors import (
    BVPSensError,
    DisconjugacyViolation,
    DomainError,
    EvaluationError,
    ExprSyntaxError,
    ExtensionFailure,
    MaxIterations,
    PerturbationInfeasible,
    ProblemError,
    SingularJacobian,
    SolverFailure,
    UnboundVariableError,
    UnknownFunctionError,
)
from .expr import eval_real, eval_with_partial, parse_expr
from .functional import BoundaryFunctional, QuadratureRule, functionals, nonlocal_integral
from .ivp import FundamentalSystem, OdeSystem, Tolerance, Trajectory, integrate, integrate_fundamental
from .oracle import fd_sensitivity, peano_check, sweep, verify
from .problem import DatumId, ProblemSpec, ValidatedProblem, builtin, datum_value, validate
from .sens import all_sensitivities, build_M, combination_check, solve_sensitivity, target_vector
from .shoot import Solution, SolverOptions, newton_solve

__version__ = "0.1.0"
