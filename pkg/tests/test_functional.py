from dataclasses import replace

import numpy as np
import pytest

from bvpsens.functional import (
    BoundaryFunctional,
    QuadratureRule,
    apply_functional,
    functional_matrix,
    functionals,
    nonlocal_integral,
)
from bvpsens.ivp import OdeSystem, integrate
from bvpsens.problem import builtin, validate


class PolyTrajectory:
    """Stand-in trajectory: fixed polynomial components on given step edges."""

    def __init__(self, coeffs, edges):
        self.coeffs = [np.asarray(c, dtype=float) for c in coeffs]
        self.edges = np.asarray(edges, dtype=float)
        self.span = (float(self.edges[0]), float(self.edges[-1]))
        self.edge_states = self.eval(self.edges)

    def eval(self, x):
        x = np.asarray(x, dtype=float)
        return np.stack([np.polynomial.polynomial.polyval(x, c) for c in self.coeffs], axis=-1)


def _poly_integral(c, a, b):
    anti = np.polynomial.polynomial.polyint(c)
    return np.polynomial.polynomial.polyval(b, anti) - np.polynomial.polynomial.polyval(a, anti)


@pytest.mark.parametrize("q", [2, 3, 5, 8])
def test_exact_up_to_degree_2q_minus_1(q):
    rng = np.random.default_rng(q)
    coeffs = rng.normal(size=2 * q)
    traj = PolyTrajectory([coeffs], [0.0, 0.7, 1.1, 2.0, 3.0])
    got = nonlocal_integral(traj, 0, 1.0, 0.4, 2.6, QuadratureRule(q))
    want = _poly_integral(coeffs, 0.4, 2.6)
    assert got == pytest.approx(want, rel=1e-12)


def test_not_exact_beyond_degree():
    coeffs = np.zeros(12)
    coeffs[-1] = 1.0
    traj = PolyTrajectory([coeffs], [0.0, 3.0])
    got = nonlocal_integral(traj, 0, 1.0, 0.0, 3.0, QuadratureRule(5))
    assert abs(got - 3.0**12 / 12) > 1e-6


def test_segments_tile_interval():
    traj = PolyTrajectory([[1.0]], [0.0, 0.7, 1.1, 2.0, 3.0])
    seg = QuadratureRule().segments(traj, 0.7, 2.6)
    np.testing.assert_array_equal(seg, [0.7, 1.1, 2.0, 2.6])


def test_on_integrated_quartic():
    # u' = 4x^3 has solution x^4, which the dense output reproduces exactly
    traj = integrate(OdeSystem(1, "4*x^3"), 0.0, [0.0], 3.0)
    got = nonlocal_integral(traj, 0, 1.0, 1.5, 2.5)
    assert got == pytest.approx((2.5**5 - 1.5**5) / 5, rel=1e-12)


def test_t1_example(t1_sol):
    assert nonlocal_integral(t1_sol.trajectory, 0, 1.0, 1.5, 2.5) == pytest.approx(2.0, abs=1e-12)


def test_zero_weight_is_exact(t2_sol):
    assert nonlocal_integral(t2_sol.trajectory, 0, 0.0, 1.5, 2.5) == 0.0


def test_constant_integrand():
    traj = integrate(OdeSystem(2, "0"), 0.0, [1.0, 0.0], 3.0)
    assert nonlocal_integral(traj, 0, 2.0, 1.5, 2.5) == pytest.approx(2.0, abs=1e-13)


@pytest.mark.parametrize("m", [1.7, 2.0, 2.31])
def test_additive(t2_sol, m):
    traj = t2_sol.trajectory
    whole = nonlocal_integral(traj, 0, 0.1, 1.5, 2.5)
    parts = nonlocal_integral(traj, 0, 0.1, 1.5, m) + nonlocal_integral(traj, 0, 0.1, m, 2.5)
    assert whole == pytest.approx(parts, abs=1e-12)


def test_linear_in_weight_and_component(t2_sol):
    traj = t2_sol.trajectory
    base = nonlocal_integral(traj, 0, 1.0, 1.5, 2.5)
    assert nonlocal_integral(traj, 0, -3.5, 1.5, 2.5) == pytest.approx(-3.5 * base, rel=1e-14)
    w = np.array([[2.5, 0.0], [0.0, 1.0]])
    scaled = traj.linear_map(w)
    assert nonlocal_integral(scaled, 0, 1.0, 1.5, 2.5) == pytest.approx(2.5 * base, rel=1e-14)
    mixed = traj.linear_map(np.array([[1.0, 1.0]]))
    both = nonlocal_integral(traj, slice(0, 2), 1.0, 1.5, 2.5)
    assert nonlocal_integral(mixed, 0, 1.0, 1.5, 2.5) == pytest.approx(both.sum(), rel=1e-13)


def test_limits_outside_span():
    traj = integrate(OdeSystem(1, "y0"), 0.0, [1.0], 1.0)
    with pytest.raises(ValueError):
        nonlocal_integral(traj, 0, 1.0, 0.5, 1.5)


def test_rule_needs_two_nodes():
    with pytest.raises(ValueError):
        QuadratureRule(1)


def test_functional_list_t1(t1):
    assert functionals(t1) == [BoundaryFunctional(1, 0, False), BoundaryFunctional(2, 0, True)]


def test_functional_list_mixed_multiplicity():
    vp = validate(builtin("t1_linear", n=3, multiplicities=(2, 1), data=((0.0, 1.0), (3.0,))))
    Ls = functionals(vp)
    assert len(Ls) == 3
    assert [L.integral for L in Ls] == [False, False, True]
    assert [(L.point, L.order) for L in Ls] == [(1, 0), (1, 1), (2, 0)]


def test_apply_functional(t1, t1_sol):
    z = t1_sol.trajectory  # z(x) = x
    assert apply_functional(BoundaryFunctional(2, 0, True), z, t1) == pytest.approx(3.0, abs=1e-12)
    assert apply_functional(BoundaryFunctional(1, 0, False), z, t1) == pytest.approx(0.0, abs=1e-15)
    assert apply_functional(BoundaryFunctional(2, 1, False), z, t1) == pytest.approx(1.0, abs=1e-12)


def test_functional_matrix_t1(t1_sol):
    m = functional_matrix(t1_sol.problem, t1_sol.fundamental)
    np.testing.assert_allclose(m, [[1.0, 0.0], [2.0, 3.0]], atol=1e-12)


def test_functional_matrix_magnitudes_survive_cancellation(t1):
    from bvpsens.shoot import linearize

    vp = validate(replace(t1.spec, p=-0.5))
    sol = linearize(vp)
    m, mag = functional_matrix(vp, sol.fundamental, magnitudes=True)
    # L_2(alpha_1) = alpha_1(1) + p * int x = 1 - 0.5 * 2
    assert m[1, 0] == pytest.approx(0.5, abs=1e-12)
    assert abs(m[1, 1]) < 1e-14
    assert mag[1, 1] == pytest.approx(2.0, abs=1e-12)
