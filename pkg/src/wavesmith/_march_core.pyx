# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled march hot loop; mirrors wavesmith._march_py."""
from libc.math cimport fabs, isfinite, INFINITY

import numpy as np

DEF OK = 0
DEF GUARD = 1
DEF PICARD_FAIL = 2
DEF NONFINITE = 3


def advance(double[::1] G, double[::1] A, double[::1] B, double[::1] P,
            double[::1] Q, double[::1] R, Py_ssize_t n0, Py_ssize_t n1,
            const double[:, ::1] M, const long long[::1] ncols, double tail,
            Py_ssize_t mtail, const double[::1] coef, double picard_tol,
            int maxit, double gfloor, double guard, int fixq=0):
    cdef Py_ssize_t rows = M.shape[0]
    cdef Py_ssize_t n, i, j, nc, stop = n1
    cdef double eA = coef[0], wA0 = coef[1], wA1 = coef[2]
    cdef double eB = coef[3], wB0 = coef[4], wB1 = coef[5]
    cdef double eP = coef[6], wP0 = coef[7], wP1 = coef[8]
    cdef double eQ = coef[9], wQ0 = coef[10], wQ1 = coef[11]
    cdef double m00 = M[0, 0]
    cdef double gp, a0, b0, p0, q0, j0, j1, s, gi, c0, c1, c2, g, f, res, den, slope, wq1
    cdef int it, worst = 0, status = OK
    with nogil:
        for n in range(n0, n1):
            gp = G[n - 1]
            a0 = eA * A[n - 1] + wA0 * gp
            b0 = eB * B[n - 1] + wB0 * gp
            p0 = eP * P[n - 1] + wP0 * gp
            if fixq:
                q0 = Q[n]
                wq1 = 0.0
            else:
                q0 = eQ * Q[n - 1] + wQ0 * gp
                wq1 = wQ1
            j0 = 0.0
            j1 = tail * 2.0 * A[n - mtail]
            nc = ncols[0]
            for j in range(1, nc):
                j1 += M[0, j] * G[n - j]
            for i in range(1, rows):
                gi = G[n - i]
                j1 += M[i, 0] * gi
                nc = ncols[i]
                s = 0.0
                for j in range(1, nc):
                    s += M[i, j] * G[n - j]
                j0 += gi * s
            c2 = 4.0 * wA1 * wB1 + wP1 * wq1 + m00
            c1 = 4.0 * (a0 * wB1 + b0 * wA1) + p0 * wq1 + q0 * wP1 + j1
            c0 = 4.0 * a0 * b0 + p0 * q0 + j0
            g = 2.0 * gp - G[n - 2]
            res = INFINITY
            it = 0
            while it < maxit:
                f = c0 + g * (c1 + g * c2)
                den = fabs(g)
                if den < gfloor:
                    den = gfloor
                res = fabs(f - g) / den
                if res <= picard_tol:
                    g = f
                    break
                slope = fabs(c1 + 2.0 * c2 * g)
                if slope > 0.9:
                    g = g + 0.5 * (f - g)
                else:
                    g = f
                it += 1
            if it > worst:
                worst = it
            G[n] = g
            A[n] = a0 + wA1 * g
            B[n] = b0 + wB1 * g
            P[n] = p0 + wP1 * g
            Q[n] = q0 + wq1 * g
            R[n] = res
            if not (isfinite(g) and isfinite(B[n]) and isfinite(Q[n])):
                status = NONFINITE
            elif it >= maxit:
                status = PICARD_FAIL
            elif fabs(B[n]) > guard or fabs(Q[n]) > guard:
                status = GUARD
            if status != OK:
                stop = n
                break
    return stop, status, worst


def identity_defect(double[::1] G, double[::1] A, double[::1] B, double[::1] P,
                    double[::1] Q, Py_ssize_t n0, Py_ssize_t n1,
                    const double[:, ::1] M, double tail, Py_ssize_t mtail,
                    double gfloor):
    cdef Py_ssize_t rows = M.shape[0], cols = M.shape[1]
    cdef Py_ssize_t n, i, j
    cdef double jv, s, den
    out = np.empty(n1 - n0)
    cdef double[::1] o = out
    for n in range(n0, n1):
        jv = tail * 2.0 * A[n - mtail] * G[n]
        for i in range(rows):
            s = 0.0
            for j in range(cols):
                s += M[i, j] * G[n - j]
            jv += G[n - i] * s
        den = fabs(G[n])
        if den < gfloor:
            den = gfloor
        o[n - n0] = fabs(G[n] - 4.0 * A[n] * B[n] - P[n] * Q[n] - jv) / den
    return out
