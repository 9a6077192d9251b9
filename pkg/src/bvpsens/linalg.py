"""Dense LU factorisation with partial pivoting for the small systems here."""

import numpy as np


class SingularMatrix(ArithmeticError):
    pass


def lu_factor(a, pivot_tol=0.0):
    """Factor ``P a = L U`` in place on a copy.

    Returns ``(lu, perm, sign)``; ``perm[i]`` is the original row now in
    position ``i``.  Raises :class:`SingularMatrix` when a pivot magnitude is
    ``<= pivot_tol`` (``pivot_tol=0`` only rejects exact zeros).
    """
    lu = np.array(a, dtype=float)
    n = lu.shape[0]
    if lu.shape != (n, n):
        raise ValueError("matrix must be square")
    perm = np.arange(n)
    sign = 1.0
    for col in range(n):
        piv = col + int(np.argmax(np.abs(lu[col:, col])))
        if abs(lu[piv, col]) <= pivot_tol:
            raise SingularMatrix(f"pivot {float(lu[piv, col]):.3e} in column {col} below {pivot_tol:.3e}")
        if piv != col:
            lu[[col, piv]] = lu[[piv, col]]
            perm[[col, piv]] = perm[[piv, col]]
            sign = -sign
        lu[col + 1 :, col] /= lu[col, col]
        lu[col + 1 :, col + 1 :] -= np.outer(lu[col + 1 :, col], lu[col, col + 1 :])
    return lu, perm, sign


def lu_solve(factors, b):
    lu, perm, _ = factors
    b = np.asarray(b, dtype=float)
    x = b[perm].copy()
    n = lu.shape[0]
    for i in range(n):
        x[i] -= lu[i, :i] @ x[:i]
    for i in reversed(range(n)):
        x[i] = (x[i] - lu[i, i + 1 :] @ x[i + 1 :]) / lu[i, i]
    return x


def lu_det(factors):
    lu, _, sign = factors
    return sign * float(np.prod(np.diag(lu)))
