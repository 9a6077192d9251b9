"""Independent checks: finite-difference sensitivities, the Peano identity for
initial value problems and the continuous-dependence sweep."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BVPSensError, PerturbationInfeasible
from .functional import apply_functional, functionals
from .ivp import OdeSystem, Tolerance, integrate_fundamental, integrate_two_sided
from .problem import DatumId, ValidatedProblem, datum_value, with_datum
from .sens import all_sensitivities, target_vector
from .shoot import DEFAULT_OPTIONS, SolverOptions, Solution, newton_solve

log = logging.getLogger(__name__)

DEFAULT_H0 = 1e-3
DEFAULT_TOL_REL = 1e-5
DEFAULT_BC_TOL = 1e-8


def default_step(vp: ValidatedProblem, id: DatumId, h0: float = DEFAULT_H0) -> float:
    return h0 * max(1.0, abs(datum_value(vp, id)))


def _solve_at(vp, id, value, grid, opts, guess):
    moved = with_datum(vp, id, value)
    span = (min(grid[0], moved.points[0]), max(grid[-1], moved.d))
    o = SolverOptions(opts.tol, opts.rule, opts.max_iter, opts.max_halvings, guess, span)
    return newton_solve(moved, o).u(grid)


def fd_sensitivity(
    vp: ValidatedProblem,
    id: DatumId,
    grid,
    h0: float | None = None,
    opts: SolverOptions = DEFAULT_OPTIONS,
    guess=None,
    all_orders: bool = False,
):
    """Richardson-extrapolated central difference of the solution in one datum.

    ``(4 D(h/2) - D(h)) / 3`` with ``D(h) = (u(theta + h) - u(theta - h)) / 2h``,
    each ``u`` a full re-solve of the boundary value problem.  Returns the
    values on ``grid`` (shape ``(len(grid),)``, or ``(len(grid), n)`` with all
    derivative orders).
    """
    grid = np.asarray(grid, dtype=float)
    theta = datum_value(vp, id)
    h = default_step(vp, id) if h0 is None else h0
    for v in (theta - h, theta + h):
        with_datum(vp, id, v)  # raises PerturbationInfeasible before any solve

    def central(hh):
        up = _solve_at(vp, id, theta + hh, grid, opts, guess)
        dn = _solve_at(vp, id, theta - hh, grid, opts, guess)
        return (up - dn) / (2 * hh)

    est = (4 * central(h / 2) - central(h)) / 3
    return est if all_orders else est[:, 0]


@dataclass(frozen=True)
class DatumCheck:
    datum: DatumId
    sup_abs: float
    sup_rel: float
    bc_residual: float
    passed: bool


@dataclass(frozen=True)
class VerificationReport:
    checks: tuple
    tol_rel: float
    bc_tol: float
    paper_signs: bool = False
    combination: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def __getitem__(self, id):
        for c in self.checks:
            if c.datum == id:
                return c
        raise KeyError(id)

    def to_dict(self):
        return {
            "paper_signs": self.paper_signs,
            "tol_rel": self.tol_rel,
            "bc_tol": self.bc_tol,
            "data": {
                c.datum.label: {
                    "sup_abs": c.sup_abs,
                    "sup_rel": c.sup_rel,
                    "bc_residual": c.bc_residual,
                    "pass": c.passed,
                }
                for c in self.checks
            },
            "pass": self.passed,
        }


def boundary_residual(sol: Solution, z, paper_signs=False) -> float:
    """Max defect of the boundary functionals applied to a sensitivity against its targets."""
    vp = sol.problem
    got = np.array([apply_functional(L, z.traj, vp, sol.options.rule) for L in functionals(vp)])
    return float(np.max(np.abs(got - target_vector(sol, z.datum, paper_signs))))


def verify(
    vp: ValidatedProblem,
    tol_rel: float = DEFAULT_TOL_REL,
    bc_tol: float = DEFAULT_BC_TOL,
    h0: float = DEFAULT_H0,
    paper_signs: bool = False,
    opts: SolverOptions = DEFAULT_OPTIONS,
    npts: int = 101,
    solution: Solution | None = None,
) -> VerificationReport:
    """Compare every variational sensitivity with its finite-difference estimate.

    Relative error is ``sup|Z - Z_fd| / max(1, sup|Z|)`` over ``npts``
    points of ``[x_1, d]``.
    """
    sol = solution if solution is not None else newton_solve(vp, opts)
    table = all_sensitivities(sol, paper_signs)
    grid = np.linspace(vp.points[0], vp.d, max(npts, 101))
    checks = []
    for id in vp.datum_ids:
        z = table[id]
        zv = z(grid)
        fd = fd_sensitivity(vp, id, grid, default_step(vp, id, h0), opts, sol.s)
        sup_abs = float(np.max(np.abs(zv - fd)))
        sup_rel = sup_abs / max(1.0, float(np.max(np.abs(zv))))
        bc = boundary_residual(sol, z, paper_signs)
        checks.append(DatumCheck(id, sup_abs, sup_rel, bc, sup_rel <= tol_rel and bc <= bc_tol))
        log.info("verify %s: sup_rel=%.3e bc=%.3e", id.label, sup_rel, bc)
    return VerificationReport(tuple(checks), tol_rel, bc_tol, paper_signs)


def peano_check(
    n: int,
    rhs,
    x0: float,
    c,
    span,
    h: float = 1e-2,
    tol: Tolerance = Tolerance(1e-12, 1e-12),
    npts: int = 101,
) -> float:
    """Sup-norm defect of ``du/dx0 = -sum_i u^(i+1)(x0) alpha_i`` over ``span``.

    The left side is a Richardson-extrapolated central difference in the
    base point with the initial values ``c`` held fixed; ``u^(n)(x0)`` comes
    from the equation.
    """
    system = rhs if isinstance(rhs, OdeSystem) else OdeSystem(n, rhs)
    c = np.asarray(c, dtype=float)
    lo, hi = span
    grid = np.linspace(lo, hi, npts)
    _, fs = integrate_fundamental(system, x0, c, (lo, hi), tol)
    higher = np.append(c[1:], system.f(x0, c))
    predicted = -(fs.phi(grid)[:, 0, :] @ higher)

    def u_at(base):
        return integrate_two_sided(system, base, c, lo, hi, tol).eval(grid)[:, 0]

    def central(hh):
        return (u_at(x0 + hh) - u_at(x0 - hh)) / (2 * hh)

    fd = (4 * central(h / 2) - central(h)) / 3
    return float(np.max(np.abs(fd - predicted)))


@dataclass(frozen=True)
class SweepCell:
    datum: DatumId
    delta: float
    deviation: float
    ratio_to_prev: float
    error: str = ""


@dataclass(frozen=True)
class ContinuityReport:
    deltas: tuple
    cells: tuple

    def deviations(self, id: DatumId):
        return [c.deviation for c in self.cells if c.datum == id]

    def ratios(self, id: DatumId):
        return [c.ratio_to_prev for c in self.cells if c.datum == id][1:]


def sweep(
    vp: ValidatedProblem,
    deltas,
    opts: SolverOptions = DEFAULT_OPTIONS,
    npts: int = 101,
    data=None,
    solution: Solution | None = None,
) -> ContinuityReport:
    """Perturb each datum by ``+delta`` and record the uniform deviation of
    ``u, ..., u^(n-1)`` on ``[x_1, d]``.

    Cells that cannot be solved get ``nan`` and an error message.
    """
    deltas = tuple(float(d) for d in deltas)
    if not deltas:
        raise ValueError("need at least one delta")
    if any(d < 0 for d in deltas) or any(a <= b for a, b in zip(deltas, deltas[1:])):
        raise ValueError("deltas must be nonnegative and strictly decreasing")
    sol = solution if solution is not None else newton_solve(vp, opts)
    grid = np.linspace(vp.points[0], vp.d, npts)
    base = sol.u(grid)
    ids = vp.datum_ids if data is None else tuple(data)
    cells = []
    for id in ids:
        prev = math.nan
        theta = datum_value(vp, id)
        for delta in deltas:
            err = ""
            if delta == 0.0:
                dev = 0.0
            else:
                try:
                    moved = _solve_at(vp, id, theta + delta, grid, opts, sol.s)
                    dev = float(np.max(np.abs(moved - base)))
                except PerturbationInfeasible as exc:
                    dev, err = math.nan, str(exc)
                except BVPSensError as exc:
                    dev, err = math.nan, f"{type(exc).__name__}: {exc}"
            ratio = prev / dev if dev != 0.0 and not math.isnan(dev) else math.nan
            cells.append(SweepCell(id, delta, dev, ratio, err))
            prev = dev
    return ContinuityReport(deltas, tuple(cells))
