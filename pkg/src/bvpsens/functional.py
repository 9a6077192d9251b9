"""The nonlocal term ``p * int_c^d z(x) dx`` over a dense-output trajectory."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def _gauss_legendre(q):
    return np.polynomial.legendre.leggauss(q)


@dataclass(frozen=True)
class QuadratureRule:
    """Composite Gauss-Legendre with ``q`` nodes per panel; panels are the
    integrator steps clipped to ``[c, d]`` so each one sees a single polynomial piece."""

    q: int = 5

    def __post_init__(self):
        if self.q < 2:
            raise ValueError("quadrature needs at least 2 nodes per segment")

    def segments(self, traj, c, d):
        inner = traj.edges[(traj.edges > c) & (traj.edges < d)]
        return np.concatenate([[c], inner, [d]])

    def nodes_weights(self, traj, c, d):
        """Flattened abscissae and weights for the whole of ``[c, d]``."""
        t, w = _gauss_legendre(self.q)
        seg = self.segments(traj, c, d)
        mid = 0.5 * (seg[1:] + seg[:-1])
        half = 0.5 * (seg[1:] - seg[:-1])
        xs = (mid[:, None] + half[:, None] * t[None, :]).ravel()
        ws = (half[:, None] * w[None, :]).ravel()
        return xs, ws


DEFAULT_RULE = QuadratureRule()


def nonlocal_integral(traj, component, p, c, d, rule: QuadratureRule = DEFAULT_RULE):
    """``p * int_c^d traj[component](x) dx``.

    ``component`` may be an int or an index array / slice, in which case a
    vector of integrals is returned.
    """
    lo, hi = traj.span
    if not (lo <= c <= d <= hi):
        raise ValueError(f"[{c!r}, {d!r}] is not inside the trajectory span [{lo!r}, {hi!r}]")
    if p == 0.0:
        vals = traj.edge_states[0, component]
        return np.zeros_like(vals) if np.ndim(vals) else 0.0
    if c == d:
        return 0.0
    xs, ws = rule.nodes_weights(traj, c, d)
    vals = traj.eval(xs)[:, component]
    total = np.tensordot(ws, vals, axes=(0, 0))
    return p * total if np.ndim(total) else float(p * total)


@dataclass(frozen=True)
class BoundaryFunctional:
    """``z -> z^(order)(x_point)``, plus ``p * int_c^d z`` when ``integral`` is set.

    ``point`` is 1-based.
    """

    point: int
    order: int
    integral: bool

    def __str__(self):
        tail = ", integral" if self.integral else ""
        return f"L(j={self.point}, i={self.order}{tail})"


def functionals(vp):
    """The n boundary functionals in row order: point by point, derivative order within a point."""
    k = vp.k
    return [
        BoundaryFunctional(j + 1, i, j + 1 == k)
        for j, m in enumerate(vp.multiplicities)
        for i in range(m)
    ]


def apply_functional(L: BoundaryFunctional, traj, vp, rule: QuadratureRule = DEFAULT_RULE):
    """Apply ``L`` to a trajectory whose component ``i`` is ``z^(i)``."""
    x = vp.points[L.point - 1]
    val = traj.eval(x)[L.order]
    if L.integral:
        val = val + nonlocal_integral(traj, 0, vp.p, vp.c, vp.d, rule)
    return float(val)


def functional_matrix(vp, fundamental, rule: QuadratureRule = DEFAULT_RULE, magnitudes=False):
    """``M[q, j] = L_q(alpha_j)`` for the fundamental columns ``alpha_j``.

    With ``magnitudes`` also return the entrywise sum of absolute values of
    the point and integral terms, a scale that survives cancellation.
    """
    n = vp.n
    rows, mags = [], []
    integral = None
    for L in functionals(vp):
        row = fundamental.phi(vp.points[L.point - 1])[L.order].copy()
        mag = np.abs(row)
        if L.integral:
            if integral is None:
                cols = slice(n, 2 * n)
                integral = nonlocal_integral(fundamental.traj, cols, vp.p, vp.c, vp.d, rule)
            row = row + integral
            mag = mag + np.abs(integral)
        rows.append(row)
        mags.append(mag)
    if magnitudes:
        return np.array(rows), np.array(mags)
    return np.array(rows)
