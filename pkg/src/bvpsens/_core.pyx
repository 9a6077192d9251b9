# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled integration kernel: tape evaluation and Dormand-Prince 5(4).

Same algorithm, constants and status codes as ``_kernels_py``.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, tan, exp, log, sqrt, pow, fabs, isfinite

cnp.import_array()

cdef enum:
    OK = 0
    BLOWUP = 1
    UNDERFLOW = 2
    DOMAIN = 3
    MAXSTEPS = 4

cdef double C2 = 1.0 / 5, C3 = 3.0 / 10, C4 = 4.0 / 5, C5 = 8.0 / 9
cdef double A21 = 1.0 / 5
cdef double A31 = 3.0 / 40, A32 = 9.0 / 40
cdef double A41 = 44.0 / 45, A42 = -56.0 / 15, A43 = 32.0 / 9
cdef double A51 = 19372.0 / 6561, A52 = -25360.0 / 2187, A53 = 64448.0 / 6561, A54 = -212.0 / 729
cdef double A61 = 9017.0 / 3168, A62 = -355.0 / 33, A63 = 46732.0 / 5247, A64 = 49.0 / 176, A65 = -5103.0 / 18656
cdef double B1 = 35.0 / 384, B3 = 500.0 / 1113, B4 = 125.0 / 192, B5 = -2187.0 / 6784, B6 = 11.0 / 84
cdef double E1 = 71.0 / 57600, E3 = -71.0 / 16695, E4 = 71.0 / 1920, E5 = -17253.0 / 339200, E6 = 22.0 / 525, E7 = -1.0 / 40
cdef double D1 = -12715105075.0 / 11282082432, D3 = 87487479700.0 / 32700410799
cdef double D4 = -10690763975.0 / 1880347072, D5 = 701980252875.0 / 199316789632
cdef double D6 = -1453857185.0 / 822651844, D7 = 69997945.0 / 29380423


cdef inline double ipow(double v, int k) nogil:
    cdef double r = 1.0
    cdef int i
    for i in range(k):
        r = r * v
    return r


cdef struct Machine:
    int ntape
    int *ops
    double *args
    int n
    int dim
    bint augment
    double *vals
    double *grads
    double *g


cdef int tape_eval(Machine *m, double x, const double *y, double *fval) nogil:
    """Run the tape; leaves the value in fval and the gradient in m.g."""
    cdef int sp = -1, t, j, n = m.n, op, k
    cdef double av, bv, v, s, s1, s2, den, b2, val, c
    cdef double *ag
    cdef double *bg
    for t in range(m.ntape):
        op = m.ops[t]
        if op <= 2:
            sp += 1
            ag = m.grads + sp * n
            for j in range(n):
                ag[j] = 0.0
            if op == 0:
                m.vals[sp] = m.args[t]
            elif op == 1:
                m.vals[sp] = x
            else:
                j = <int>m.args[t]
                m.vals[sp] = y[j]
                ag[j] = 1.0
        elif op <= 6:
            bv = m.vals[sp]
            bg = m.grads + sp * n
            sp -= 1
            av = m.vals[sp]
            ag = m.grads + sp * n
            if op == 3:
                m.vals[sp] = av + bv
                for j in range(n):
                    ag[j] = ag[j] + bg[j]
            elif op == 4:
                m.vals[sp] = av - bv
                for j in range(n):
                    ag[j] = ag[j] - bg[j]
            elif op == 5:
                m.vals[sp] = av * bv
                for j in range(n):
                    ag[j] = ag[j] * bv + av * bg[j]
            else:
                if bv == 0.0:
                    return DOMAIN
                m.vals[sp] = av / bv
                b2 = bv * bv
                for j in range(n):
                    ag[j] = (ag[j] * bv - av * bg[j]) / b2
        elif op == 7:
            m.vals[sp] = -m.vals[sp]
            ag = m.grads + sp * n
            for j in range(n):
                ag[j] = -ag[j]
        elif op == 8:
            k = <int>m.args[t]
            v = m.vals[sp]
            ag = m.grads + sp * n
            if k == 0:
                m.vals[sp] = 1.0
                for j in range(n):
                    ag[j] = 0.0
            elif k > 0:
                s = k * ipow(v, k - 1)
                m.vals[sp] = ipow(v, k)
                for j in range(n):
                    ag[j] = s * ag[j]
            else:
                den = ipow(v, -k)
                if den == 0.0:
                    return DOMAIN
                m.vals[sp] = 1.0 / den
                s = k * (1.0 / ipow(v, 1 - k))
                for j in range(n):
                    ag[j] = s * ag[j]
        elif op == 9:
            v = m.vals[sp]
            bg = m.grads + sp * n
            sp -= 1
            bv = m.vals[sp]
            ag = m.grads + sp * n
            if bv <= 0.0:
                return DOMAIN
            val = pow(bv, v)
            s1 = v * pow(bv, v - 1.0)
            s2 = log(bv) * val
            m.vals[sp] = val
            for j in range(n):
                ag[j] = s1 * ag[j] + s2 * bg[j]
        else:
            v = m.vals[sp]
            ag = m.grads + sp * n
            if op == 10:
                val = sin(v)
                s = cos(v)
            elif op == 11:
                val = cos(v)
                s = -sin(v)
            elif op == 12:
                c = cos(v)
                val = tan(v)
                s = 1.0 / (c * c)
            elif op == 13:
                val = exp(v)
                s = val
            elif op == 14:
                if v <= 0.0:
                    return DOMAIN
                val = log(v)
                s = 1.0 / v
            else:
                if v < 0.0:
                    return DOMAIN
                val = sqrt(v)
                if val != 0.0:
                    s = 0.5 / val
                else:
                    s = 1.0 / val
            m.vals[sp] = val
            for j in range(n):
                if ag[j] != 0.0:
                    ag[j] = s * ag[j]
    fval[0] = m.vals[0]
    for j in range(n):
        m.g[j] = m.grads[j]
    return OK


cdef int rhs(Machine *m, double x, const double *u, double *out) nogil:
    cdef int n = m.n, i, j, q, status
    cdef double f, acc
    status = tape_eval(m, x, u, &f)
    if status != OK:
        return status
    for i in range(n - 1):
        out[i] = u[i + 1]
    out[n - 1] = f
    if m.augment:
        for i in range(n - 1):
            for j in range(n):
                out[n + i * n + j] = u[n + (i + 1) * n + j]
        for j in range(n):
            acc = 0.0
            for q in range(n):
                acc = acc + m.g[q] * u[n + q * n + j]
            out[n + (n - 1) * n + j] = acc
    return OK


cdef double rms_scaled(const double *v, const double *scale, int dim) nogil:
    cdef double acc = 0.0, t
    cdef int i
    if dim == 0:
        return 0.0
    for i in range(dim):
        t = v[i] / scale[i]
        acc = acc + t * t
    return sqrt(acc / dim)


cdef bint all_finite(const double *v, int dim) nogil:
    cdef int i
    for i in range(dim):
        if not isfinite(v[i]):
            return False
    return True


def integrate_tape(ops, args, int n, bint augment, double x0, u0, double x_end,
                   double atol, double rtol, double max_norm, double min_step_frac,
                   long max_steps):
    cdef cnp.ndarray[cnp.int32_t, ndim=1] ops_a = np.ascontiguousarray(ops, dtype=np.int32)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] args_a = np.ascontiguousarray(args, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] y_a = np.array(u0, dtype=np.float64)
    cdef int dim = y_a.shape[0]
    cdef int depth = ops_a.shape[0] + 1
    cdef Machine m
    m.ntape = ops_a.shape[0]
    m.ops = <int *>ops_a.data
    m.args = <double *>args_a.data
    m.n = n
    m.dim = dim
    m.augment = augment

    cdef cnp.ndarray[cnp.float64_t, ndim=1] work_a = np.zeros(depth * (n + 1) + n + 13 * dim)
    cdef double *work = <double *>work_a.data
    m.vals = work
    m.grads = work + depth
    m.g = work + depth * (n + 1)
    cdef double *y = <double *>y_a.data
    cdef double *k1 = m.g + n
    cdef double *k2 = k1 + dim
    cdef double *k3 = k2 + dim
    cdef double *k4 = k3 + dim
    cdef double *k5 = k4 + dim
    cdef double *k6 = k5 + dim
    cdef double *k7 = k6 + dim
    cdef double *yt = k7 + dim
    cdef double *ynew = yt + dim
    cdef double *err = ynew + dim
    cdef double *sc = err + dim
    cdef double *tmp = sc + dim
    cdef double *tmp2 = tmp + dim

    cdef int cap = 64, nacc = 0, status = OK, i
    cdef double direction = 1.0 if x_end > x0 else -1.0
    cdef double span = fabs(x_end - x0)
    cdef double min_step = min_step_frac * span
    cdef double x = x0, h, hs, remaining, errn = 0.0, fac, xnew = x0, d0, d1, d2, h0, h1, t
    cdef bint rejected = False, last
    cdef long nsteps = 0
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xs = np.empty(cap + 1)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] ys = np.empty((cap + 1, dim))
    cdef cnp.ndarray[cnp.float64_t, ndim=3] dense = np.empty((cap, 4, dim))
    xs[0] = x0
    for i in range(dim):
        ys[0, i] = y[i]

    status = rhs(&m, x, y, k1)
    if status != OK:
        return _pack(DOMAIN, xs, ys, dense, 0, x, "domain error in right-hand side")
    if not all_finite(k1, dim):
        return _pack(BLOWUP, xs, ys, dense, 0, x, "nonfinite derivative")

    # initial step
    for i in range(dim):
        sc[i] = atol + fabs(y[i]) * rtol
    d0 = rms_scaled(y, sc, dim)
    d1 = rms_scaled(k1, sc, dim)
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    if h0 > span:
        h0 = span
    for i in range(dim):
        yt[i] = y[i] + direction * h0 * k1[i]
    status = rhs(&m, x0 + direction * h0, yt, k2)
    if status != OK:
        return _pack(DOMAIN, xs, ys, dense, 0, x, "domain error in right-hand side")
    for i in range(dim):
        tmp[i] = k2[i] - k1[i]
    d2 = rms_scaled(tmp, sc, dim) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = h0 * 1e-3
        if h1 < 1e-6:
            h1 = 1e-6
    else:
        h1 = pow(0.01 / (d1 if d1 > d2 else d2), 0.2)
    h = 100 * h0
    if h1 < h:
        h = h1
    if span < h:
        h = span

    while True:
        remaining = fabs(x_end - x)
        if remaining == 0.0:
            break
        if nsteps >= max_steps:
            return _pack(MAXSTEPS, xs, ys, dense, nacc, x, "too many steps")
        last = False
        if h >= remaining or remaining - h < min_step:
            h = remaining
            last = True
        if h < min_step:
            return _pack(UNDERFLOW, xs, ys, dense, nacc, x, "step size underflow")
        hs = direction * h
        with nogil:
            for i in range(dim):
                yt[i] = y[i] + hs * (A21 * k1[i])
            status = rhs(&m, x + C2 * hs, yt, k2)
            if status == OK:
                for i in range(dim):
                    yt[i] = y[i] + hs * (A31 * k1[i] + A32 * k2[i])
                status = rhs(&m, x + C3 * hs, yt, k3)
            if status == OK:
                for i in range(dim):
                    yt[i] = y[i] + hs * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i])
                status = rhs(&m, x + C4 * hs, yt, k4)
            if status == OK:
                for i in range(dim):
                    yt[i] = y[i] + hs * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i])
                status = rhs(&m, x + C5 * hs, yt, k5)
            if status == OK:
                for i in range(dim):
                    yt[i] = y[i] + hs * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i])
                status = rhs(&m, x + hs, yt, k6)
            if status == OK:
                for i in range(dim):
                    ynew[i] = y[i] + hs * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i])
                xnew = x_end if last else x + hs
                status = rhs(&m, xnew, ynew, k7)
            if status == OK:
                for i in range(dim):
                    err[i] = hs * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i])
                    t = fabs(y[i])
                    if fabs(ynew[i]) > t:
                        t = fabs(ynew[i])
                    sc[i] = atol + rtol * t
                errn = rms_scaled(err, sc, dim)
        if status != OK:
            return _pack(DOMAIN, xs, ys, dense, nacc, x, "domain error in right-hand side")
        nsteps += 1
        if not isfinite(errn):
            h *= 0.2
            rejected = True
            continue
        if errn <= 1.0:
            if nacc == cap:
                cap *= 2
                xs = np.resize(xs, cap + 1)
                ys = np.resize(ys, (cap + 1, dim))
                dense = np.resize(dense, (cap, 4, dim))
            for i in range(dim):
                tmp[i] = ynew[i] - y[i]
                tmp2[i] = hs * k1[i] - tmp[i]
                dense[nacc, 0, i] = tmp[i]
                dense[nacc, 1, i] = tmp2[i]
                dense[nacc, 2, i] = tmp[i] - hs * k7[i] - tmp2[i]
                dense[nacc, 3, i] = hs * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i])
            nacc += 1
            x = xnew
            t = 0.0
            for i in range(dim):
                y[i] = ynew[i]
                k1[i] = k7[i]
                ys[nacc, i] = y[i]
                if fabs(y[i]) > t:
                    t = fabs(y[i])
            xs[nacc] = x
            if t > max_norm:
                return _pack(BLOWUP, xs, ys, dense, nacc, x, "state norm exceeded bound")
            if errn == 0.0:
                fac = 10.0
            else:
                fac = 0.9 * pow(errn, -0.2)
                if fac < 0.2:
                    fac = 0.2
                if fac > 10.0:
                    fac = 10.0
            if rejected and fac > 1.0:
                fac = 1.0
            rejected = False
            h *= fac
        else:
            fac = 0.9 * pow(errn, -0.2)
            if fac < 0.2:
                fac = 0.2
            h *= fac
            rejected = True
    return _pack(OK, xs, ys, dense, nacc, x, "")


def _pack(status, xs, ys, dense, nacc, x, msg):
    return (status, np.array(xs[: nacc + 1]), np.array(ys[: nacc + 1]),
            np.array(dense[:nacc]), x, msg)
