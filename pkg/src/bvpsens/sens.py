"""Sensitivities of the BVP solution with respect to every boundary datum.

Each sensitivity solves the variational equation along the converged
solution, so it is a combination ``Z = sum_j c_j alpha_j`` of the
fundamental solutions based at ``x_1``.  The coefficients come from one
linear system ``M c = t`` where ``M[q, j] = L_q(alpha_j)`` and ``t`` holds the
values the boundary functionals must take on ``Z`` for the datum at hand.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DisconjugacyViolation
from .functional import (
    BoundaryFunctional,
    apply_functional,
    functional_matrix,
    functionals,
    nonlocal_integral,
)
from .ivp import Trajectory
from .linalg import SingularMatrix, lu_det, lu_factor, lu_solve
from .problem import DatumId, ValidatedProblem
from .shoot import Solution

__all__ = [
    "BoundaryFunctional",
    "SensitivityFunction",
    "SensitivityTable",
    "all_sensitivities",
    "apply_functional",
    "build_M",
    "combination_check",
    "functionals",
    "solve_sensitivity",
    "target_vector",
]

DET_RTOL = 1e-10


def build_M(sol: Solution) -> np.ndarray:
    """Boundary-functional matrix of the fundamental system.

    Raises :class:`DisconjugacyViolation` when ``|det M|`` is below
    ``1e-10`` times the product of its row norms, i.e. when the homogeneous
    variational problem has a nontrivial solution numerically.
    """
    m = functional_matrix(sol.problem, sol.fundamental, sol.options.rule)
    _factor_checked(m)
    return m


def _factor_checked(m):
    scale = float(np.prod(np.linalg.norm(m, axis=1)))
    try:
        factors = lu_factor(m)
    except SingularMatrix:
        det = 0.0
    else:
        det = lu_det(factors)
    if not abs(det) >= DET_RTOL * scale:
        raise DisconjugacyViolation(
            f"boundary-functional matrix is singular: |det M| = {abs(det):.3e} "
            f"< {DET_RTOL:g} * {scale:.3e}; uniqueness for the variational problem fails"
        )
    return factors


def determinant(sol: Solution) -> float:
    m = functional_matrix(sol.problem, sol.fundamental, sol.options.rule)
    try:
        return lu_det(lu_factor(m))
    except SingularMatrix:
        return 0.0


def check_disconjugacy(sol: Solution) -> float:
    """Return ``det M`` or raise :class:`DisconjugacyViolation`."""
    return lu_det(_factor_checked(functional_matrix(sol.problem, sol.fundamental, sol.options.rule)))


def _nth(sol, x):
    state = sol.u(x)
    return np.append(state, sol.problem.system.nth_derivative(x, state))


def target_vector(sol: Solution, id: DatumId, paper_signs: bool = False) -> np.ndarray:
    """Values the n boundary functionals must take on the sensitivity to ``id``.

    With ``paper_signs`` the c and d targets use the opposite sign
    (``-p u(c)`` and ``+p u(d)``) for comparison purposes.
    """
    vp = sol.problem
    Ls = functionals(vp)
    t = np.zeros(len(Ls))
    at_k = np.array([L.point == vp.k for L in Ls])
    if id.kind == "y":
        t[[q for q, L in enumerate(Ls) if L.point == id.l and L.order == id.r]] = 1.0
    elif id.kind == "x":
        derivs = _nth(sol, vp.points[id.l - 1])
        for q, L in enumerate(Ls):
            if L.point == id.l:
                t[q] = -derivs[L.order + 1]
    elif id.kind == "c":
        val = vp.p * float(sol.u(vp.c)[0])
        t[at_k] = -val if paper_signs else val
    elif id.kind == "d":
        val = vp.p * float(sol.u(vp.d)[0])
        t[at_k] = val if paper_signs else -val
    elif id.kind == "p":
        t[at_k] = -nonlocal_integral(sol.trajectory, 0, 1.0, vp.c, vp.d, sol.options.rule)
    else:
        raise ValueError(f"unknown datum {id!r}")
    return t


@dataclass(frozen=True)
class SensitivityFunction:
    """``Z = sum_j coeffs[j] alpha_j``; ``traj`` carries ``Z, Z', ..., Z^(n-1)``."""

    datum: DatumId
    coeffs: np.ndarray
    traj: Trajectory

    def __call__(self, x, order: int = 0):
        return self.traj.eval(x)[..., order]

    def derivatives(self, x):
        return self.traj.eval(x)


def _as_function(sol: Solution, id: DatumId, coeffs) -> SensitivityFunction:
    n = sol.problem.n
    w = np.zeros((n, n + n * n))
    for i in range(n):
        w[i, n + i * n : n + (i + 1) * n] = coeffs
    return SensitivityFunction(id, np.asarray(coeffs), sol.fundamental.traj.linear_map(w))


def solve_sensitivity(sol: Solution, id: DatumId, paper_signs: bool = False, factors=None) -> SensitivityFunction:
    """Partial derivative of the solution with respect to one datum.

    ``M c = t`` is solved by LU with partial pivoting.
    """
    if factors is None:
        factors = _factor_checked(functional_matrix(sol.problem, sol.fundamental, sol.options.rule))
    c = lu_solve(factors, target_vector(sol, id, paper_signs))
    return _as_function(sol, id, c)


@dataclass(frozen=True)
class SensitivityTable:
    solution: Solution
    M: np.ndarray
    entries: dict
    paper_signs: bool = False

    def __getitem__(self, id: DatumId) -> SensitivityFunction:
        return self.entries[id]

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    def sample(self, xs) -> dict:
        return {id: z(xs) for id, z in self.entries.items()}


def all_sensitivities(sol: Solution, paper_signs: bool = False, data=None) -> SensitivityTable:
    """Sensitivities for every datum (or the given subset), one factorisation."""
    vp = sol.problem
    m = functional_matrix(vp, sol.fundamental, sol.options.rule)
    factors = _factor_checked(m)
    ids = vp.datum_ids if data is None else tuple(data)
    entries = {id: solve_sensitivity(sol, id, paper_signs, factors) for id in ids}
    return SensitivityTable(sol, m, entries, paper_signs)


def combination_check(sol: Solution, table: SensitivityTable, npts: int = 101) -> dict:
    """Sup-norm residuals of the linear relations between sensitivities.

    Each non-``y`` sensitivity is a fixed combination of the ``y``
    sensitivities: ``X_l = -sum_i u^(i+1)(x_l) Y_il``,
    ``C = p u(c) sum_i Y_ik``, ``D = -p u(d) sum_i Y_ik`` and
    ``P = -(int_c^d u) sum_i Y_ik``.  Keys are datum labels.
    """
    vp: ValidatedProblem = sol.problem
    xs = np.linspace(vp.points[0], vp.d, npts)
    Y = {id: table[id].derivatives(xs) for id in vp.datum_ids if id.kind == "y"}
    k = vp.k
    y_k = sum(Y[DatumId.Y(i, k)] for i in range(vp.multiplicities[k - 1]))
    out = {}
    for l in range(1, k + 1):
        derivs = _nth(sol, vp.points[l - 1])
        combo = sum(derivs[i + 1] * Y[DatumId.Y(i, l)] for i in range(vp.multiplicities[l - 1]))
        out[f"x:{l}"] = _sup(table[DatumId.X(l)].derivatives(xs) + combo)
    sign = -1.0 if table.paper_signs else 1.0
    uc = vp.p * float(sol.u(vp.c)[0])
    ud = vp.p * float(sol.u(vp.d)[0])
    integral = nonlocal_integral(sol.trajectory, 0, 1.0, vp.c, vp.d, sol.options.rule)
    out["c"] = _sup(table[DatumId("c")].derivatives(xs) - sign * uc * y_k)
    out["d"] = _sup(table[DatumId("d")].derivatives(xs) + sign * ud * y_k)
    out["p"] = _sup(table[DatumId("p")].derivatives(xs) + integral * y_k)
    return out


def _sup(a):
    return float(np.max(np.abs(a)))
