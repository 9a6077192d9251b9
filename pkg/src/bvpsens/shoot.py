"""Single shooting from ``x_1`` with a Newton iteration on the free initial values."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ExtensionFailure, MaxIterations, SingularJacobian
from .functional import DEFAULT_RULE, QuadratureRule, functional_matrix, functionals, nonlocal_integral
from .ivp import DEFAULT_TOL, FundamentalSystem, Tolerance, Trajectory, integrate_fundamental
from .linalg import SingularMatrix, lu_factor, lu_solve
from .problem import ValidatedProblem

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverOptions:
    tol: Tolerance = DEFAULT_TOL
    rule: QuadratureRule = DEFAULT_RULE
    max_iter: int = 50
    max_halvings: int = 20
    guess: tuple | None = None
    # extra abscissae the final trajectory must cover, beyond [x_1, d]
    span: tuple | None = None


DEFAULT_OPTIONS = SolverOptions()


@dataclass(frozen=True)
class Solution:
    problem: ValidatedProblem
    s: np.ndarray
    initial_state: np.ndarray
    trajectory: Trajectory
    fundamental: FundamentalSystem
    residual: np.ndarray
    residual_norm: float
    iterations: int
    converged: bool
    history: tuple = field(default=())
    options: SolverOptions = DEFAULT_OPTIONS

    def u(self, x):
        """``(u, u', ..., u^(n-1))`` at ``x``."""
        return self.trajectory.eval(x)


def n_unknowns(vp: ValidatedProblem) -> int:
    return vp.n - vp.multiplicities[0]


def assemble_initial_state(vp: ValidatedProblem, s) -> np.ndarray:
    """``u^(i)(x_1)``: the x_1 data for i < m_1, then the shooting unknowns."""
    s = np.asarray(s, dtype=float).ravel()
    if s.shape[0] != n_unknowns(vp):
        raise ValueError(f"expected {n_unknowns(vp)} shooting unknowns, got {s.shape[0]}")
    return np.concatenate([np.asarray(vp.data[0], dtype=float), s])


def _evaluate(vp, s, opts, span=None):
    u0 = assemble_initial_state(vp, s)
    x1 = vp.points[0]
    traj, fs = integrate_fundamental(vp, x1, u0, span or (x1, vp.d), opts.tol)
    return u0, traj, fs


def _residual_from(vp, traj, rule):
    out = []
    integral = None
    for L in functionals(vp)[vp.multiplicities[0] :]:
        val = traj.eval(vp.points[L.point - 1])[L.order]
        if L.integral:
            if integral is None:
                integral = nonlocal_integral(traj, 0, vp.p, vp.c, vp.d, rule)
            val = val + integral
        out.append(val - vp.data[L.point - 1][L.order])
    return np.array(out, dtype=float)


def _jacobian_from(vp, fs, rule, magnitudes=False):
    m1 = vp.multiplicities[0]
    if magnitudes:
        m, mag = functional_matrix(vp, fs, rule, magnitudes=True)
        return m[m1:, m1:], mag[m1:, m1:]
    return functional_matrix(vp, fs, rule)[m1:, m1:]


def residual(vp: ValidatedProblem, s, opts: SolverOptions = DEFAULT_OPTIONS) -> np.ndarray:
    """Boundary-condition defects at the non-``x_1`` functionals for shooting values ``s``."""
    _, traj, _ = _evaluate(vp, s, opts)
    return _residual_from(vp, traj, opts.rule)


def residual_jacobian(vp: ValidatedProblem, s, opts: SolverOptions = DEFAULT_OPTIONS) -> np.ndarray:
    _, _, fs = _evaluate(vp, s, opts)
    return _jacobian_from(vp, fs, opts.rule)


def convergence_threshold(vp: ValidatedProblem) -> float:
    return 1e-10 * (1.0 + vp.data_scale)


def linearize(vp: ValidatedProblem, s=None, opts: SolverOptions = DEFAULT_OPTIONS) -> Solution:
    """Trajectory and fundamental system at ``s`` (default: the guess), without iterating."""
    if s is None:
        s = opts.guess if opts.guess is not None else np.zeros(n_unknowns(vp))
    s = np.asarray(s, dtype=float)
    u0, traj, fs = _evaluate(vp, s, opts, opts.span)
    r = _residual_from(vp, traj, opts.rule)
    rn = float(np.max(np.abs(r)))
    return Solution(vp, s, u0, traj, fs, r, rn, 0, rn <= convergence_threshold(vp), (rn,), opts)


def newton_solve(vp: ValidatedProblem, opts: SolverOptions = DEFAULT_OPTIONS) -> Solution:
    """Damped Newton iteration on the shooting unknowns.

    The Jacobian is the boundary-functional matrix restricted to the free
    columns, read off the fundamental system integrated jointly with the
    state.  A step is halved (at most ``opts.max_halvings`` times) while it
    fails to decrease the residual max-norm.
    """
    m = n_unknowns(vp)
    s = np.zeros(m) if opts.guess is None else np.asarray(opts.guess, dtype=float).ravel()
    if s.shape[0] != m:
        raise ValueError(f"guess must have {m} entries, got {s.shape[0]}")
    threshold = convergence_threshold(vp)
    u0, traj, fs = _evaluate(vp, s, opts)
    r = _residual_from(vp, traj, opts.rule)
    rn = float(np.max(np.abs(r)))
    history = [rn]
    it = 0
    while rn > threshold:
        if it >= opts.max_iter:
            raise MaxIterations(f"no convergence after {it} Newton iterations (residual {rn:.3e})")
        jac, mag = _jacobian_from(vp, fs, opts.rule, magnitudes=True)
        scale = float(np.max(mag))
        try:
            factors = lu_factor(jac, 1e-12 * scale)
        except SingularMatrix as exc:
            raise SingularJacobian(
                f"shooting Jacobian is singular at iteration {it} ({exc}); "
                "the boundary functionals likely violate uniqueness (disconjugacy)"
            ) from None
        step = -lu_solve(factors, r)
        lam = 1.0
        for _ in range(opts.max_halvings + 1):
            s_try = s + lam * step
            try:
                trial = _evaluate(vp, s_try, opts)
            except ExtensionFailure:
                if lam < 2.0**-opts.max_halvings:
                    raise
                lam *= 0.5
                continue
            r_try = _residual_from(vp, trial[1], opts.rule)
            rn_try = float(np.max(np.abs(r_try)))
            if rn_try < rn or lam <= 2.0**-opts.max_halvings:
                break
            lam *= 0.5
        s, (u0, traj, fs), r, rn = s_try, trial, r_try, rn_try
        it += 1
        history.append(rn)
        log.debug("newton iteration %d: |R| = %.3e (lambda = %g)", it, rn, lam)
    if opts.span is not None:
        x1 = vp.points[0]
        traj, fs = integrate_fundamental(vp, x1, u0, opts.span, opts.tol)
    return Solution(vp, s, u0, traj, fs, r, rn, it, True, tuple(history), opts)
