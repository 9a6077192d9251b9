"""Pure-Python integration kernel.

Mirrors ``_core.pyx`` operation for operation; used when the compiled
extension is unavailable and as the reference in backend comparisons.
"""

import math

import numpy as np

# status codes shared with the compiled kernel
OK, BLOWUP, UNDERFLOW, DOMAIN, MAXSTEPS = 0, 1, 2, 3, 4

C2, C3, C4, C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
A21 = 1 / 5
A31, A32 = 3 / 40, 9 / 40
A41, A42, A43 = 44 / 45, -56 / 15, 32 / 9
A51, A52, A53, A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
A61, A62, A63, A64, A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
B1, B3, B4, B5, B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
E1, E3, E4, E5, E6, E7 = (
    71 / 57600,
    -71 / 16695,
    71 / 1920,
    -17253 / 339200,
    22 / 525,
    -1 / 40,
)
D1, D3, D4, D5, D6, D7 = (
    -12715105075 / 11282082432,
    87487479700 / 32700410799,
    -10690763975 / 1880347072,
    701980252875 / 199316789632,
    -1453857185 / 822651844,
    69997945 / 29380423,
)


class _Domain(Exception):
    pass


def _ipow(v, k):
    r = 1.0
    for _ in range(k):
        r = r * v
    return r


def tape_eval(ops, args, x, y, n):
    """Evaluate a tape at ``(x, y)``; returns ``(value, gradient list)``."""
    vals = []
    grads = []
    for op, arg in zip(ops, args):
        if op == 0:
            vals.append(arg)
            grads.append([0.0] * n)
        elif op == 1:
            vals.append(x)
            grads.append([0.0] * n)
        elif op == 2:
            j = int(arg)
            vals.append(y[j])
            g = [0.0] * n
            g[j] = 1.0
            grads.append(g)
        elif op <= 6:
            bv = vals.pop()
            bg = grads.pop()
            av = vals[-1]
            ag = grads[-1]
            if op == 3:
                vals[-1] = av + bv
                grads[-1] = [p + q for p, q in zip(ag, bg)]
            elif op == 4:
                vals[-1] = av - bv
                grads[-1] = [p - q for p, q in zip(ag, bg)]
            elif op == 5:
                vals[-1] = av * bv
                grads[-1] = [p * bv + av * q for p, q in zip(ag, bg)]
            else:
                if bv == 0.0:
                    raise _Domain("division by zero")
                vals[-1] = av / bv
                b2 = bv * bv
                grads[-1] = [(p * bv - av * q) / b2 for p, q in zip(ag, bg)]
        elif op == 7:
            vals[-1] = -vals[-1]
            grads[-1] = [-p for p in grads[-1]]
        elif op == 8:
            k = int(arg)
            v = vals[-1]
            if k == 0:
                vals[-1] = 1.0
                grads[-1] = [0.0] * n
            elif k > 0:
                s = k * _ipow(v, k - 1)
                vals[-1] = _ipow(v, k)
                grads[-1] = [s * p for p in grads[-1]]
            else:
                den = _ipow(v, -k)
                if den == 0.0:
                    raise _Domain("division by zero")
                vals[-1] = 1.0 / den
                s = k * (1.0 / _ipow(v, 1 - k))
                grads[-1] = [s * p for p in grads[-1]]
        elif op == 9:
            ev = vals.pop()
            eg = grads.pop()
            bv = vals[-1]
            bg = grads[-1]
            if bv <= 0.0:
                raise _Domain("non-integer power of nonpositive base")
            val = _pow(bv, ev)
            s1 = ev * _pow(bv, ev - 1.0)
            s2 = math.log(bv) * val
            vals[-1] = val
            grads[-1] = [s1 * p + s2 * q for p, q in zip(bg, eg)]
        else:
            v = vals[-1]
            g = grads[-1]
            if op == 10:
                val, s = math.sin(v), math.cos(v)
            elif op == 11:
                val, s = math.cos(v), -math.sin(v)
            elif op == 12:
                c = math.cos(v)
                val, s = math.tan(v), 1.0 / (c * c)
            elif op == 13:
                val = _exp(v)
                s = val
            elif op == 14:
                if v <= 0.0:
                    raise _Domain("log of nonpositive argument")
                val, s = math.log(v), 1.0 / v
            else:
                if v < 0.0:
                    raise _Domain("sqrt of negative argument")
                val = math.sqrt(v)
                s = 0.5 / val if val != 0.0 else math.inf
            vals[-1] = val
            grads[-1] = [s * p if p != 0.0 else 0.0 for p in g]
    return vals[-1], grads[-1]


def _exp(v):
    try:
        return math.exp(v)
    except OverflowError:
        return math.inf


def _pow(b, e):
    try:
        return b**e
    except OverflowError:
        return math.inf


def make_rhs(ops, args, n, augment):
    """First-order right-hand side of the nth-order ODE, optionally augmented
    with the fundamental-matrix block ``Phi' = A(x, u) Phi`` (row-major)."""
    ops = [int(o) for o in ops]
    args = [float(a) for a in args]

    def rhs(x, u):
        y = u[:n].tolist()
        f, g = tape_eval(ops, args, x, y, n)
        out = np.empty(u.shape[0])
        out[: n - 1] = u[1:n]
        out[n - 1] = f
        if augment:
            phi = u[n:].reshape(n, n)
            dphi = out[n:].reshape(n, n)
            dphi[: n - 1] = phi[1:]
            dphi[n - 1] = np.asarray(g) @ phi
        return out

    return rhs


def _rms(v):
    return math.sqrt(float(np.mean(v * v))) if v.size else 0.0


def initial_step(rhs, x0, y0, f0, direction, span, atol, rtol):
    scale = atol + np.abs(y0) * rtol
    d0 = _rms(y0 / scale)
    d1 = _rms(f0 / scale)
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    h0 = min(h0, span)
    y1 = y0 + direction * h0 * f0
    f1 = rhs(x0 + direction * h0, y1)
    d2 = _rms((f1 - f0) / scale) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, span)


def dopri5(rhs, x0, u0, x_end, atol, rtol, max_norm=1e12, min_step_frac=1e-14, max_steps=1_000_000):
    """Adaptive Dormand-Prince 5(4) integration from ``x0`` to ``x_end``.

    Returns ``(status, xs, ys, dense, x_fail, message)`` where ``dense[i]``
    holds the four continuous-extension vectors of step ``i`` (the fifth is
    ``ys[i]`` itself).
    """
    y = np.array(u0, dtype=float)
    dim = y.shape[0]
    direction = 1.0 if x_end > x0 else -1.0
    span = abs(x_end - x0)
    min_step = min_step_frac * span
    xs = [x0]
    ys = [y.copy()]
    dense = []
    x = x0
    try:
        k1 = rhs(x, y)
        if not np.all(np.isfinite(k1)):
            return BLOWUP, xs, ys, dense, x, "nonfinite derivative"
        h = initial_step(rhs, x, y, k1, direction, span, atol, rtol)
    except _Domain as exc:
        return DOMAIN, xs, ys, dense, x, str(exc)
    rejected = False
    nsteps = 0
    while True:
        remaining = abs(x_end - x)
        if remaining == 0.0:
            break
        if nsteps >= max_steps:
            return MAXSTEPS, xs, ys, dense, x, "too many steps"
        last = False
        if h >= remaining or remaining - h < min_step:
            h = remaining
            last = True
        if h < min_step:
            return UNDERFLOW, xs, ys, dense, x, "step size underflow"
        hs = direction * h
        try:
            k2 = rhs(x + C2 * hs, y + hs * (A21 * k1))
            k3 = rhs(x + C3 * hs, y + hs * (A31 * k1 + A32 * k2))
            k4 = rhs(x + C4 * hs, y + hs * (A41 * k1 + A42 * k2 + A43 * k3))
            k5 = rhs(x + C5 * hs, y + hs * (A51 * k1 + A52 * k2 + A53 * k3 + A54 * k4))
            k6 = rhs(x + hs, y + hs * (A61 * k1 + A62 * k2 + A63 * k3 + A64 * k4 + A65 * k5))
            ynew = y + hs * (B1 * k1 + B3 * k3 + B4 * k4 + B5 * k5 + B6 * k6)
            xnew = x_end if last else x + hs
            k7 = rhs(xnew, ynew)
        except _Domain as exc:
            return DOMAIN, xs, ys, dense, x, str(exc)
        nsteps += 1
        err = hs * (E1 * k1 + E3 * k3 + E4 * k4 + E5 * k5 + E6 * k6 + E7 * k7)
        sc = atol + rtol * np.maximum(np.abs(y), np.abs(ynew))
        errn = _rms(err / sc)
        if not math.isfinite(errn):
            h *= 0.2
            rejected = True
            continue
        if errn <= 1.0:
            rc2 = ynew - y
            rc3 = hs * k1 - rc2
            rc4 = rc2 - hs * k7 - rc3
            rc5 = hs * (D1 * k1 + D3 * k3 + D4 * k4 + D5 * k5 + D6 * k6 + D7 * k7)
            dense.append((rc2, rc3, rc4, rc5))
            x = xnew
            y = ynew
            k1 = k7
            xs.append(x)
            ys.append(y.copy())
            if np.max(np.abs(y)) > max_norm:
                return BLOWUP, xs, ys, dense, x, "state norm exceeded bound"
            fac = 10.0 if errn == 0.0 else min(10.0, max(0.2, 0.9 * errn**-0.2))
            if rejected:
                fac = min(1.0, fac)
            rejected = False
            h *= fac
        else:
            h *= max(0.2, 0.9 * errn**-0.2)
            rejected = True
    return OK, xs, ys, dense, x, ""


def integrate_tape(ops, args, n, augment, x0, u0, x_end, atol, rtol, max_norm, min_step_frac, max_steps):
    rhs = make_rhs(ops, args, n, augment)
    status, xs, ys, dense, xf, msg = dopri5(
        rhs, x0, u0, x_end, atol, rtol, max_norm, min_step_frac, max_steps
    )
    return _pack(status, xs, ys, dense, xf, msg, len(u0))


def _pack(status, xs, ys, dense, xf, msg, dim):
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float).reshape(len(xs), dim)
    if dense:
        dense = np.asarray(dense, dtype=float)
    else:
        dense = np.zeros((0, 4, dim))
    return status, xs, ys, dense, xf, msg
