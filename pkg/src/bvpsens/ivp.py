"""Initial value problems: adaptive Dormand-Prince 5(4) with dense output,
and joint integration of the state with the fundamental matrix of the
variational equation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from . import _backend, _kernels_py
from .errors import ExtensionFailure
from .expr import Expr, as_expr, compile_tape, eval_real, gradient, max_y_index

MAX_NORM = 1e12
MIN_STEP_FRAC = 1e-14
MAX_STEPS = 1_000_000


class Tolerance(NamedTuple):
    atol: float = 1e-10
    rtol: float = 1e-10

    def halved(self):
        return Tolerance(self.atol / 2, self.rtol / 2)


DEFAULT_TOL = Tolerance()


class OdeSystem:
    """The scalar ODE ``y^(n) = f(x, y, ..., y^(n-1))`` as a first-order system."""

    def __init__(self, n: int, rhs):
        if n < 1:
            raise ValueError("order must be at least 1")
        self.n = int(n)
        self.expr: Expr = as_expr(rhs)
        if max_y_index(self.expr) >= self.n:
            raise ValueError(f"right-hand side references y{max_y_index(self.expr)} but n = {self.n}")
        self.tape = compile_tape(self.expr)

    def f(self, x, y):
        return eval_real(self.expr, {"x": x, "y": y})

    def partials(self, x, y):
        """``df/dy_i`` for i = 0..n-1."""
        return gradient(self.expr, {"x": x, "y": y})[1]

    def nth_derivative(self, x, state):
        """``u^(n)(x)`` from the equation itself, given ``state = u(x), ..., u^(n-1)(x)``."""
        return self.f(x, np.asarray(state)[: self.n])

    def __call__(self, x, u):
        u = np.asarray(u, dtype=float)
        out = np.empty_like(u)
        out[:-1] = u[1:]
        out[-1] = self.f(x, u)
        return out


class Trajectory:
    """Piecewise quartic dense output over a tiling of ``[lo, hi]``.

    Steps are stored in ascending order of abscissa; a step integrated
    right-to-left keeps its own start point ``xa`` and negative ``h`` so that
    the interpolant is evaluated exactly as it was produced.
    """

    def __init__(self, edges, edge_states, xa, h, ystart, coeffs):
        self.edges = edges
        self.edge_states = edge_states
        self.xa = xa
        self.h = h
        self.ystart = ystart
        self.coeffs = coeffs

    @property
    def span(self):
        return float(self.edges[0]), float(self.edges[-1])

    @property
    def dim(self):
        return self.edge_states.shape[1]

    @property
    def nsteps(self):
        return len(self.xa)

    def components(self, sel) -> "Trajectory":
        """View restricted to a slice of the state components (no copy)."""
        return Trajectory(
            self.edges,
            self.edge_states[:, sel],
            self.xa,
            self.h,
            self.ystart[:, sel],
            self.coeffs[:, :, sel],
        )

    def linear_map(self, w) -> "Trajectory":
        """Trajectory of ``w @ state``; exact, since the interpolant is linear in the stored data."""
        w = np.asarray(w, dtype=float)
        return Trajectory(
            self.edges,
            self.edge_states @ w.T,
            self.xa,
            self.h,
            self.ystart @ w.T,
            self.coeffs @ w.T,
        )

    def _locate(self, x):
        x = np.asarray(x, dtype=float)
        lo, hi = self.span
        if np.any(x < lo) or np.any(x > hi) or np.any(np.isnan(x)):
            bad = x[(x < lo) | (x > hi) | np.isnan(x)].ravel()[0]
            raise ValueError(f"abscissa {bad!r} outside trajectory span [{lo!r}, {hi!r}]")
        idx = np.searchsorted(self.edges, x, side="right") - 1
        return x, np.clip(idx, 0, self.nsteps - 1)

    def __call__(self, x):
        return self.eval(x)

    def eval(self, x):
        """State at ``x`` (scalar -> (dim,), array -> (..., dim))."""
        x, idx = self._locate(x)
        theta = ((x - self.xa[idx]) / self.h[idx])[..., None]
        c = self.coeffs[idx]
        r2, r3, r4, r5 = c[..., 0, :], c[..., 1, :], c[..., 2, :], c[..., 3, :]
        t1 = 1.0 - theta
        out = self.ystart[idx] + theta * (r2 + t1 * (r3 + theta * (r4 + t1 * r5)))
        exact = np.searchsorted(self.edges, x)
        exact = np.minimum(exact, len(self.edges) - 1)
        hit = self.edges[exact] == x
        if np.any(hit):
            out = np.where(hit[..., None], self.edge_states[exact], out)
        return out

    def derivative(self, x):
        """x-derivative of the interpolant (not of the ODE right-hand side)."""
        x, idx = self._locate(x)
        h = self.h[idx][..., None]
        theta = ((x - self.xa[idx]) / self.h[idx])[..., None]
        c = self.coeffs[idx]
        r2, r3, r4, r5 = c[..., 0, :], c[..., 1, :], c[..., 2, :], c[..., 3, :]
        th2 = theta * theta
        dp = r2 + (1 - 2 * theta) * r3 + (2 * theta - 3 * th2) * r4 + (2 * theta - 6 * th2 + 4 * th2 * theta) * r5
        return dp / h


def _segments(status, xs, ys, dense, xf, msg):
    if status != _kernels_py.OK:
        raise ExtensionFailure(f"integration failed at x = {xf!r}: {msg}", xf)
    return xs, ys, dense


def _run(rhs, x0, u0, x_end, tol, augment=False):
    u0 = np.asarray(u0, dtype=float)
    if not np.all(np.isfinite(u0)):
        raise ValueError("initial state must be finite")
    if isinstance(rhs, OdeSystem):
        if augment:
            u0 = np.concatenate([u0[: rhs.n], np.eye(rhs.n).ravel()])
        out = _backend.integrate_tape(
            rhs.tape.ops,
            rhs.tape.args,
            rhs.n,
            augment,
            float(x0),
            u0,
            float(x_end),
            tol.atol,
            tol.rtol,
            MAX_NORM,
            MIN_STEP_FRAC,
            MAX_STEPS,
        )
    else:
        out = _kernels_py._pack(
            *_kernels_py.dopri5(
                rhs, float(x0), u0, float(x_end), tol.atol, tol.rtol, MAX_NORM, MIN_STEP_FRAC, MAX_STEPS
            ),
            len(u0),
        )
    return _segments(*out)


def _assemble(pieces):
    """Merge one-directional runs (each (xs, ys, dense)) into a Trajectory."""
    edges, states, xa, h, ystart, coeffs = [], [], [], [], [], []
    for xs, ys, dense in pieces:
        if xs[-1] < xs[0]:
            edges.append(xs[::-1])
            states.append(ys[::-1])
            xa.append(xs[:-1][::-1])
            h.append((xs[1:] - xs[:-1])[::-1])
            ystart.append(ys[:-1][::-1])
            coeffs.append(dense[::-1])
        else:
            edges.append(xs)
            states.append(ys)
            xa.append(xs[:-1])
            h.append(xs[1:] - xs[:-1])
            ystart.append(ys[:-1])
            coeffs.append(dense)
    # adjacent runs share their junction point
    e = np.concatenate([edges[0]] + [p[1:] for p in edges[1:]])
    s = np.concatenate([states[0]] + [p[1:] for p in states[1:]])
    return Trajectory(
        e, s, np.concatenate(xa), np.concatenate(h), np.concatenate(ystart), np.concatenate(coeffs)
    )


def integrate(rhs: OdeSystem | Callable, x0: float, u0, x_end: float, tol: Tolerance = DEFAULT_TOL) -> Trajectory:
    """Integrate ``u' = rhs(x, u)`` from ``x0`` to ``x_end`` (either direction).

    ``rhs`` is an :class:`OdeSystem` (run on the selected kernel) or any
    callable ``(x, u) -> du`` (run on the pure-Python kernel).
    """
    if x0 == x_end:
        raise ValueError("integration span is empty")
    return _assemble([_run(rhs, x0, u0, x_end, tol)])


def eval_state(traj: Trajectory, x):
    return traj.eval(x)


def integrate_two_sided(rhs, x_base, u0, lo, hi, tol=DEFAULT_TOL, augment=False) -> Trajectory:
    """Integrate from ``x_base`` outwards so the trajectory covers ``[lo, hi]``."""
    lo = min(lo, x_base)
    hi = max(hi, x_base)
    if lo == hi:
        raise ValueError("integration span is empty")
    pieces = []
    if lo < x_base:
        pieces.append(_run(rhs, x_base, u0, lo, tol, augment))
    if hi > x_base:
        pieces.append(_run(rhs, x_base, u0, hi, tol, augment))
    return _assemble(pieces)


@dataclass(frozen=True)
class FundamentalSystem:
    """Joint trajectory of ``(u, Phi)``; ``Phi[i, j]`` is the i-th derivative of
    the fundamental solution ``alpha_j`` with ``Phi(x_base) = I``."""

    traj: Trajectory
    x_base: float
    n: int

    @property
    def span(self):
        return self.traj.span

    def phi(self, x):
        out = self.traj.eval(x)[..., self.n :]
        return out.reshape(out.shape[:-1] + (self.n, self.n))

    def phi_derivative(self, x):
        out = self.traj.derivative(x)[..., self.n :]
        return out.reshape(out.shape[:-1] + (self.n, self.n))

    def column_component(self, j: int, i: int = 0) -> int:
        """Index in the joint state of ``alpha_j^(i)``."""
        return self.n + i * self.n + j

    def columns(self) -> Trajectory:
        """Trajectory view whose components are ``alpha_0 .. alpha_{n-1}`` (order 0)."""
        return self.traj.components(slice(self.n, 2 * self.n))


def integrate_fundamental(system, x_base: float, u0, span, tol: Tolerance = DEFAULT_TOL):
    """Integrate state and fundamental matrix together from ``x_base``.

    ``system`` is an :class:`OdeSystem` or anything carrying one as
    ``.system`` together with ``points`` and ``d`` (a validated problem), in
    which case the trajectory also covers ``[x_1, d]``.

    Returns ``(state trajectory, FundamentalSystem)``; the state trajectory
    is a view on the joint one.
    """
    lo, hi = span
    if not isinstance(system, OdeSystem):
        lo = min(lo, system.points[0])
        hi = max(hi, system.d)
        system = system.system
    joint = integrate_two_sided(system, x_base, u0, lo, hi, tol, augment=True)
    return joint.components(slice(0, system.n)), FundamentalSystem(joint, float(x_base), system.n)
