"""Pure numpy implementation of the march hot loop.

Same signature and semantics as the compiled ``_march_core`` module; used
when the extension is unavailable or WAVESMITH_PURE_PYTHON=1 is set.
"""
import math

import numpy as np

OK, GUARD, PICARD_FAIL, NONFINITE = 0, 1, 2, 3


def advance(G, A, B, P, Q, R, n0, n1, M, ncols, tail, mtail, coef,
            picard_tol, maxit, gfloor, guard, fixq=0):
    """Compute nodes n0 .. n1-1 in place.

    Returns (next_node, status, max_picard_iterations).  On a non-zero status
    next_node is the offending node (its values are written but not
    accepted).  With ``fixq`` the Q values already stored are used as given."""
    rows, cols = M.shape
    eA, wA0, wA1, eB, wB0, wB1, eP, wP0, wP1, eQ, wQ0, wQ1 = (float(c) for c in coef)
    m00 = float(M[0, 0])
    Mc0 = M[1:, 0]
    Mr = M[:, 1:cols]
    worst = 0
    for n in range(n0, n1):
        gp = G[n - 1]
        a0 = eA * A[n - 1] + wA0 * gp
        b0 = eB * B[n - 1] + wB0 * gp
        p0 = eP * P[n - 1] + wP0 * gp
        if fixq:
            q0, wq1 = Q[n], 0.0
        else:
            q0, wq1 = eQ * Q[n - 1] + wQ0 * gp, wQ1
        past = G[n - rows + 1:n][::-1]          # G_{n-1}, ..., G_{n-rows+1}
        s = Mr @ past[:cols - 1]                 # row sums over z offsets >= 1
        j0 = float(past @ s[1:])
        j1 = float(s[0] + Mc0 @ past) + tail * 2.0 * A[n - mtail]
        # quadratic identity g = F(g)
        c2 = 4.0 * wA1 * wB1 + wP1 * wq1 + m00
        c1 = 4.0 * (a0 * wB1 + b0 * wA1) + p0 * wq1 + q0 * wP1 + j1
        c0 = 4.0 * a0 * b0 + p0 * q0 + j0
        g = 2.0 * gp - G[n - 2]
        res = math.inf
        it = 0
        while it < maxit:
            f = c0 + g * (c1 + g * c2)
            res = abs(f - g) / max(abs(g), gfloor)
            if res <= picard_tol:
                g = f
                break
            slope = abs(c1 + 2.0 * c2 * g)
            g = g + 0.5 * (f - g) if slope > 0.9 else f
            it += 1
        worst = max(worst, it)
        G[n] = g
        A[n] = a0 + wA1 * g
        B[n] = b0 + wB1 * g
        P[n] = p0 + wP1 * g
        Q[n] = q0 + wq1 * g
        R[n] = res
        if not (math.isfinite(g) and math.isfinite(B[n]) and math.isfinite(Q[n])):
            return n, NONFINITE, worst
        if it >= maxit:
            return n, PICARD_FAIL, worst
        if abs(B[n]) > guard or abs(Q[n]) > guard:
            return n, GUARD, worst
    return n1, OK, worst


def identity_defect(G, A, B, P, Q, n0, n1, M, tail, mtail, gfloor):
    """|G - 4AB - PQ - J| / max(|G|, gfloor) at nodes n0 .. n1-1."""
    rows, cols = M.shape
    out = np.empty(n1 - n0)
    for k, n in enumerate(range(n0, n1)):
        win = G[n - rows + 1:n + 1][::-1]
        j = float(win @ (M @ win[:cols])) + tail * 2.0 * A[n - mtail] * G[n]
        rhs = 4.0 * A[n] * B[n] + P[n] * Q[n] + j
        out[k] = abs(G[n] - rhs) / max(abs(G[n]), gfloor)
    return out
