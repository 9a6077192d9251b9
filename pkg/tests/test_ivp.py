import math

import numpy as np
import pytest

from bvpsens import _backend
from bvpsens.errors import ExtensionFailure
from bvpsens.ivp import OdeSystem, Tolerance, integrate, integrate_fundamental, integrate_two_sided

E = 2.718281828459045
TOL = Tolerance(1e-10, 1e-10)


def test_exponential(backend):
    traj = integrate(OdeSystem(1, "y0"), 0.0, [1.0], 1.0, TOL)
    assert traj.eval(1.0)[0] == pytest.approx(E, abs=1e-8)


def test_linear_is_exact(backend):
    traj = integrate(OdeSystem(2, "0"), 0.0, [0.0, 1.0], 1.0, TOL)
    xs = np.linspace(0, 1, 37)
    np.testing.assert_allclose(traj.eval(xs), np.column_stack([xs, np.ones_like(xs)]), rtol=0, atol=1e-15)


def test_sine(backend):
    traj = integrate(OdeSystem(2, "-y0"), 0.0, [0.0, 1.0], math.pi / 2, TOL)
    np.testing.assert_allclose(traj.eval(math.pi / 2), [1.0, 0.0], atol=1e-8)


def test_dense_output_between_steps(backend):
    traj = integrate(OdeSystem(2, "-y0"), 0.0, [0.0, 1.0], 3.0, TOL)
    xs = np.linspace(0, 3, 301)
    assert np.max(np.abs(traj.eval(xs)[:, 0] - np.sin(xs))) < 1e-8
    assert np.max(np.abs(traj.derivative(xs)[:, 0] - np.cos(xs))) < 1e-8


def test_backward_integration(backend):
    traj = integrate(OdeSystem(1, "y0"), 1.0, [E], 0.0, TOL)
    assert traj.eval(0.0)[0] == pytest.approx(1.0, abs=1e-9)
    assert traj.span == (0.0, 1.0)


def test_plain_callable_rhs():
    traj = integrate(lambda x, u: np.array([u[1], -u[0]]), 0.0, [0.0, 1.0], math.pi / 2, TOL)
    np.testing.assert_allclose(traj.eval(math.pi / 2), [1.0, 0.0], atol=1e-8)


def test_t1_trajectory(t1_sol):
    np.testing.assert_allclose(t1_sol.u(0.5), [0.5, 1.0], atol=1e-10)


def test_outside_span_raises():
    traj = integrate(OdeSystem(1, "y0"), 0.0, [1.0], 1.0, TOL)
    with pytest.raises(ValueError):
        traj.eval(1.5)
    with pytest.raises(ValueError):
        traj.eval([0.5, -0.1])


def test_blow_up_is_reported(backend):
    with pytest.raises(ExtensionFailure) as info:
        integrate(OdeSystem(1, "y0^2"), 0.0, [1.0], 2.0, TOL)
    assert 0.9 < info.value.x <= 1.0


def test_domain_error_is_reported(backend):
    with pytest.raises(ExtensionFailure):
        integrate(OdeSystem(1, "log(y0) - 10"), 0.0, [1.0], 1.0, TOL)


def test_fundamental_matrix_nilpotent(backend):
    _, fs = integrate_fundamental(OdeSystem(2, "0"), 0.0, [0.0, 1.0], (0.0, 2.0), TOL)
    for x in (0.0, 0.3, 1.0, 2.0):
        np.testing.assert_allclose(fs.phi(x), [[1.0, x], [0.0, 1.0]], atol=1e-14)


def test_fundamental_scalar_exponential(backend):
    _, fs = integrate_fundamental(OdeSystem(1, "y0"), 0.0, [1.0], (0.0, 1.0), TOL)
    assert fs.phi(1.0)[0, 0] == pytest.approx(E, abs=1e-8)


def test_fundamental_two_sided(backend):
    state, fs = integrate_fundamental(OdeSystem(2, "-y0"), 1.0, [math.sin(1.0), math.cos(1.0)], (-1.0, 3.0), TOL)
    assert fs.span == (-1.0, 3.0)
    xs = np.linspace(-1, 3, 41)
    np.testing.assert_allclose(state.eval(xs)[:, 0], np.sin(xs), atol=1e-8)
    # alpha_0 = cos(x - 1), alpha_1 = sin(x - 1)
    np.testing.assert_allclose(fs.phi(xs)[:, 0, 0], np.cos(xs - 1), atol=1e-8)
    np.testing.assert_allclose(fs.phi(xs)[:, 0, 1], np.sin(xs - 1), atol=1e-8)


@pytest.mark.parametrize("rhs, u0", [("-sin(y0)", [0.0, 0.53]), ("y0*y1 - x*y0^3", [0.2, -0.1]), ("exp(-y1) - y0", [1.0, 0.0])])
def test_variational_residual(backend, rhs, u0):
    system = OdeSystem(2, rhs)
    state, fs = integrate_fundamental(system, 0.0, u0, (0.0, 2.5), TOL)
    xs = np.linspace(0.0, 2.5, 50)
    u = state.eval(xs)
    phi = fs.phi(xs)
    dphi = fs.phi_derivative(xs)
    n = system.n
    for j in range(n):
        z = phi[:, :, j]
        zn = dphi[:, n - 1, j]
        rhs_vals = np.array([np.dot(system.partials(x, ui), zi) for x, ui, zi in zip(xs, u, z)])
        scale = max(1.0, float(np.max(np.abs(z))))
        assert np.max(np.abs(zn - rhs_vals)) <= 1e-6 * scale


def _errors(fixture, tol):
    if fixture == "exp":
        return abs(integrate(OdeSystem(1, "y0"), 0.0, [1.0], 1.0, tol).eval(1.0)[0] - E)
    traj = integrate(OdeSystem(2, "-y0"), 0.0, [0.0, 1.0], math.pi / 2, tol)
    return float(np.max(np.abs(traj.eval(math.pi / 2) - [1.0, 0.0])))


@pytest.mark.parametrize("fixture", ["exp", "sine"])
def test_tolerance_halving_does_not_hurt(fixture):
    tol = Tolerance(1e-5, 1e-5)
    prev = _errors(fixture, tol)
    for _ in range(8):
        tol = tol.halved()
        err = _errors(fixture, tol)
        assert err <= prev
        prev = err


@pytest.mark.skipif(len(_backend.available()) < 2, reason="compiled kernel not built")
def test_backends_agree():
    system = OdeSystem(2, "-sin(y0) + 0.1*cos(x)*y1")
    out = {}
    for name in _backend.available():
        prev = _backend.set_backend(name)
        try:
            _, fs = integrate_fundamental(system, 0.5, [0.1, 0.4], (-1.0, 4.0), TOL)
        finally:
            _backend.set_backend(prev)
        out[name] = fs.traj.eval(np.linspace(-1.0, 4.0, 77))
    a, b = out.values()
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-13)


def test_two_sided_covers_base_inside():
    traj = integrate_two_sided(OdeSystem(1, "y0"), 0.5, [1.0], 0.0, 1.0, TOL)
    assert traj.span == (0.0, 1.0)
    assert traj.eval(0.5)[0] == 1.0
    assert traj.eval(0.0)[0] == pytest.approx(math.exp(-0.5), abs=1e-9)


def test_fallback_without_extension():
    import subprocess
    import sys

    code = (
        "import sys\n"
        "class Block:\n"
        "    def find_spec(self, name, path=None, target=None):\n"
        "        if name == 'bvpsens._core':\n"
        "            raise ImportError('blocked')\n"
        "sys.meta_path.insert(0, Block())\n"
        "from bvpsens import _backend\n"
        "from bvpsens.ivp import OdeSystem, integrate\n"
        "assert _backend.available() == ['python'], _backend.available()\n"
        "assert _backend.current() == 'python'\n"
        "print(integrate(OdeSystem(1, 'y0'), 0.0, [1.0], 1.0).eval(1.0)[0])\n"
    )
    proc = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert abs(float(proc.stdout) - E) < 1e-8
