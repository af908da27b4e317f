"""NumPy/SciPy fallback implementations of the compiled kernels."""

import numpy as np


def tridiag_factor(lower, diag, upper):
    """Thomas-algorithm factorization (no pivoting); see the Cython twin."""
    n = diag.shape[0]
    cp = np.empty(n)
    inv_piv = np.empty(n)
    inv_piv[0] = 1.0 / diag[0]
    cp[0] = upper[0] * inv_piv[0]
    for i in range(1, n):
        inv_piv[i] = 1.0 / (diag[i] - lower[i] * cp[i - 1])
        cp[i] = (upper[i] if i < n - 1 else 0.0) * inv_piv[i]
    return cp, inv_piv


def tridiag_solve_factored(lower, cp, inv_piv, rhs):
    """Rows of ``rhs`` (nsystems, n) are independent right-hand sides."""
    n = rhs.shape[1]
    x = np.empty_like(rhs, dtype=np.complex128)
    x[:, 0] = rhs[:, 0] * inv_piv[0]
    for i in range(1, n):
        x[:, i] = (rhs[:, i] - lower[i] * x[:, i - 1]) * inv_piv[i]
    for i in range(n - 2, -1, -1):
        x[:, i] -= cp[i] * x[:, i + 1]
    return x


def power_rows(spec, weights):
    return (spec.real**2 + spec.imag**2) @ weights


def cumtrapz_rows(values, dy):
    out = np.empty_like(values, dtype=np.complex128)
    out[:, 0] = 0.0
    np.cumsum(0.5 * dy * (values[:, 1:] + values[:, :-1]), axis=1, out=out[:, 1:])
    return out
