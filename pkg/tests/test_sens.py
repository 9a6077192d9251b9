from dataclasses import replace

import numpy as np
import pytest

from bvpsens.errors import DisconjugacyViolation
from bvpsens.linalg import lu_factor, lu_solve
from bvpsens.oracle import boundary_residual
from bvpsens.problem import C, D, P, DatumId, builtin, validate
from bvpsens.sens import (
    all_sensitivities,
    build_M,
    check_disconjugacy,
    combination_check,
    determinant,
    solve_sensitivity,
    target_vector,
)
from bvpsens.shoot import linearize, newton_solve

Y01, Y02, X1, X2 = DatumId.Y(0, 1), DatumId.Y(0, 2), DatumId.X(1), DatumId.X(2)

# closed forms for T1 (u = x), worked out by hand from u = y01 + B (x - x1)
T1_CLOSED = {
    Y01: lambda x: 1 - 2 * x / 3,
    Y02: lambda x: x / 3,
    X1: lambda x: -1 + 2 * x / 3,
    X2: lambda x: -x / 3,
    C: lambda x: x / 2,
    D: lambda x: -5 * x / 6,
    P: lambda x: -2 * x / 3,
}


def test_M_t1(t1_sol):
    np.testing.assert_allclose(build_M(t1_sol), [[1.0, 0.0], [2.0, 3.0]], atol=1e-12)
    assert determinant(t1_sol) == pytest.approx(3.0, abs=1e-8)
    assert check_disconjugacy(t1_sol) == pytest.approx(3.0, abs=1e-8)


def test_M_singular(t1):
    sol = linearize(validate(replace(t1.spec, p=-0.5)))
    with pytest.raises(DisconjugacyViolation):
        build_M(sol)
    with pytest.raises(DisconjugacyViolation):
        all_sensitivities(sol)


def test_two_point_y_double_prime_is_disconjugate():
    vp = validate(builtin("t1_linear", p=0.0, points=(0.0, 0.4)))
    sol = newton_solve(vp)
    np.testing.assert_allclose(build_M(sol), [[1.0, 0.0], [1.0, 0.4]], atol=1e-14)


@pytest.mark.parametrize(
    "id, want",
    [(Y02, [0.0, 1.0]), (X2, [0.0, -1.0]), (C, [0.0, 1.5]), (P, [0.0, -2.0]), (Y01, [1.0, 0.0]), (X1, [-1.0, 0.0]), (D, [0.0, -2.5])],
)
def test_targets_t1(t1_sol, id, want):
    np.testing.assert_allclose(target_vector(t1_sol, id), want, atol=1e-12)


def test_paper_targets_flip_c_and_d(t1_sol):
    np.testing.assert_allclose(target_vector(t1_sol, C, paper_signs=True), [0.0, -1.5], atol=1e-12)
    np.testing.assert_allclose(target_vector(t1_sol, D, paper_signs=True), [0.0, 2.5], atol=1e-12)
    np.testing.assert_array_equal(target_vector(t1_sol, P, paper_signs=True), target_vector(t1_sol, P))


def test_x_targets_are_next_derivatives(t2_sol):
    u1 = t2_sol.u(1.0)
    np.testing.assert_allclose(target_vector(t2_sol, X2), [0.0, -u1[1]], atol=1e-14)
    vp = validate(builtin("t2_pendulum", n=3, multiplicities=(1, 2), data=((0.0,), (0.5, 0.1)), rhs="-sin(y0) - y2"))
    sol = newton_solve(vp)
    state = sol.u(1.0)
    np.testing.assert_allclose(target_vector(sol, X2), [0.0, -state[1], -state[2]], atol=1e-14)
    u0 = sol.u(0.0)
    np.testing.assert_allclose(target_vector(sol, X1), [-u0[1], 0.0, 0.0], atol=1e-14)


@pytest.mark.parametrize("id", list(T1_CLOSED))
def test_t1_closed_forms(t1_sol, id):
    xs = np.linspace(0.0, 2.5, 101)
    z = solve_sensitivity(t1_sol, id)
    assert np.max(np.abs(z(xs) - T1_CLOSED[id](xs))) <= 1e-8


def test_t1_closed_forms_symbolic(t1_sol):
    sp = pytest.importorskip("sympy")
    x, y01, y02, x1, x2, c, d, p = sp.symbols("x y01 y02 x1 x2 c d p")
    B = (y02 - y01 * (1 + p * (d - c))) / ((x2 - x1) + p * ((d**2 - c**2) / 2 - x1 * (d - c)))
    u = y01 + B * (x - x1)
    point = {y01: 0, y02: 3, x1: 0, x2: 1, c: sp.Rational(3, 2), d: sp.Rational(5, 2), p: 1}
    symbols = {Y01: y01, Y02: y02, X1: x1, X2: x2, C: c, D: d, P: p}
    table = all_sensitivities(t1_sol)
    xs = np.linspace(0.0, 2.5, 11)
    for id, sym in symbols.items():
        dz = sp.lambdify(x, sp.diff(u, sym).subs(point), "numpy")
        want = np.broadcast_to(dz(xs), xs.shape)
        assert np.max(np.abs(table[id](xs) - want)) <= 1e-8, id.label


def test_derivative_orders(t1_sol):
    z = solve_sensitivity(t1_sol, P)
    np.testing.assert_allclose(z(np.array([0.5, 2.0]), order=1), [-2 / 3, -2 / 3], atol=1e-10)
    assert z.derivatives(1.0).shape == (2,)


def test_table_covers_all_data(t2_sol):
    table = all_sensitivities(t2_sol)
    assert len(table) == 7
    assert list(table) == list(t2_sol.problem.datum_ids)
    assert set(table.sample([0.0, 1.0])) == set(table)
    sub = all_sensitivities(t2_sol, data=[C])
    assert list(sub) == [C]


@pytest.mark.parametrize("name", ["t1", "t2"])
def test_boundary_values_reproduce_targets(request, name):
    sol = request.getfixturevalue(name + "_sol")
    table = all_sensitivities(sol)
    for id in table:
        assert boundary_residual(sol, table[id]) <= 1e-8


def test_linear_in_target(t2_sol):
    m = build_M(t2_sol)
    f = lu_factor(m)
    t1 = target_vector(t2_sol, C)
    t2 = target_vector(t2_sol, X2)
    both = lu_solve(f, t1 + t2)
    np.testing.assert_allclose(both, lu_solve(f, t1) + lu_solve(f, t2), rtol=0, atol=1e-12)


@pytest.mark.parametrize("name", ["t1", "t2"])
def test_zero_target_gives_zero(request, name):
    sol = request.getfixturevalue(name + "_sol")
    c = lu_solve(lu_factor(build_M(sol)), np.zeros(sol.problem.n))
    assert np.max(np.abs(c)) <= 1e-12


def test_no_integral_weight_means_no_c_d_dependence(t2):
    sol = newton_solve(validate(replace(t2.spec, p=0.0)))
    xs = np.linspace(0.0, 2.5, 51)
    table = all_sensitivities(sol)
    assert np.max(np.abs(table[C](xs))) == 0.0
    assert np.max(np.abs(table[D](xs))) == 0.0


@pytest.mark.parametrize("name", ["t1", "t2"])
@pytest.mark.parametrize("flipped", [False, True])
def test_combination_identities(request, name, flipped):
    sol = request.getfixturevalue(name + "_sol")
    res = combination_check(sol, all_sensitivities(sol, flipped))
    assert set(res) == {"x:1", "x:2", "c", "d", "p"}
    assert max(res.values()) <= 1e-8
