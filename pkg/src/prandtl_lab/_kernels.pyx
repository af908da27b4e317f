# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner-loop kernels for the time stepper and its diagnostics.

Same call signatures as the NumPy fallback in ``_kernels_np``; the
dispatcher in ``kernels`` picks one of the two at import time.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def tridiag_factor(double[::1] lower, double[::1] diag, double[::1] upper):
    """Precompute the Thomas-algorithm factorization of a tridiagonal matrix.

    Returns (cp, inv_piv) so repeated solves skip the elimination of the
    matrix itself.  The matrix must not require pivoting (true for the
    diagonally dominant Crank-Nicolson operator).
    """
    cdef Py_ssize_t n = diag.shape[0]
    cdef cnp.ndarray[double, ndim=1] cp = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] inv_piv = np.empty(n, dtype=np.float64)
    cdef double[::1] cpv = cp
    cdef double[::1] ipv = inv_piv
    cdef Py_ssize_t i
    cdef double piv

    piv = diag[0]
    ipv[0] = 1.0 / piv
    cpv[0] = upper[0] * ipv[0]
    for i in range(1, n):
        piv = diag[i] - lower[i] * cpv[i - 1]
        ipv[i] = 1.0 / piv
        cpv[i] = (upper[i] if i < n - 1 else 0.0) * ipv[i]
    return cp, inv_piv


def tridiag_solve_factored(double[::1] lower,
                           double[::1] cp,
                           double[::1] inv_piv,
                           double complex[:, ::1] rhs):
    """Solve the factored tridiagonal system along the last axis of ``rhs``.

    ``rhs`` has shape (nsystems, n); each row is an independent right-hand
    side.  A new array of the same shape is returned.
    """
    cdef Py_ssize_t nsys = rhs.shape[0]
    cdef Py_ssize_t n = rhs.shape[1]
    cdef cnp.ndarray[complex, ndim=2] out = np.empty((nsys, n), dtype=np.complex128)
    cdef double complex[:, ::1] x = out
    cdef Py_ssize_t s, i

    for s in range(nsys):
        x[s, 0] = rhs[s, 0] * inv_piv[0]
        for i in range(1, n):
            x[s, i] = (rhs[s, i] - lower[i] * x[s, i - 1]) * inv_piv[i]
        for i in range(n - 2, -1, -1):
            x[s, i] = x[s, i] - cp[i] * x[s, i + 1]
    return out


def power_rows(double complex[:, ::1] spec, double[::1] weights):
    """Row sums of |spec|^2 against vertical weights: out[f] = sum_m |spec[f,m]|^2 w[m]."""
    cdef Py_ssize_t nf = spec.shape[0]
    cdef Py_ssize_t nm = spec.shape[1]
    cdef cnp.ndarray[double, ndim=1] out = np.empty(nf, dtype=np.float64)
    cdef double[::1] ov = out
    cdef Py_ssize_t f, m
    cdef double acc, re, im

    for f in range(nf):
        acc = 0.0
        for m in range(nm):
            re = spec[f, m].real
            im = spec[f, m].imag
            acc += (re * re + im * im) * weights[m]
        ov[f] = acc
    return out


def cumtrapz_rows(double complex[:, ::1] values, double dy):
    """Cumulative trapezoid along the second axis, starting at zero."""
    cdef Py_ssize_t nf = values.shape[0]
    cdef Py_ssize_t nm = values.shape[1]
    cdef cnp.ndarray[complex, ndim=2] out = np.empty((nf, nm), dtype=np.complex128)
    cdef double complex[:, ::1] ov = out
    cdef Py_ssize_t f, m
    cdef double half = 0.5 * dy

    for f in range(nf):
        ov[f, 0] = 0.0
        for m in range(1, nm):
            ov[f, m] = ov[f, m - 1] + half * (values[f, m - 1] + values[f, m])
    return out
