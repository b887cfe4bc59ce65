# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hybrid-simulation kernel.

Steps a hybrid model forward sample by sample: evaluate the dynamics
dictionary at the current state, advance the outputs with the active
subsystem's coefficients, then evaluate the outgoing transition predicates
to pick the next mode.  The loop is inherently sequential, which is why it
lives in C rather than NumPy.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport cos, exp, fabs, isfinite, sin, tanh

cnp.import_array()

DEF K_MONOMIAL = 0
DEF K_SIN = 1
DEF K_COS = 2
DEF K_TANH = 3
DEF K_EXP = 4
DEF K_ABS = 5
DEF K_SIGN = 6


cdef inline double _term(int kind, cnp.int32_t[:] exps, int arg, double[:] s) nogil:
    cdef double val = 1.0
    cdef double x
    cdef int a, e
    if kind == K_MONOMIAL:
        for a in range(exps.shape[0]):
            e = exps[a]
            while e > 0:
                val *= s[a]
                e -= 1
        return val
    x = s[arg]
    if kind == K_SIN:
        return sin(x)
    if kind == K_COS:
        return cos(x)
    if kind == K_TANH:
        return tanh(x)
    if kind == K_EXP:
        return exp(x)
    if kind == K_ABS:
        return fabs(x)
    return 0.0 if x == 0.0 else (1.0 if x > 0.0 else -1.0)


def simulate_hybrid(kinds_phi, exps_phi, args_phi, W,
                    kinds_psi, exps_psi, args_psi,
                    rule_from, rule_to, rule_v,
                    y0, int m0, u, int steps, double guard):
    """Run the step loop; returns (outputs, modes, diverged).

    Rules must be sorted by (from, to) so that exact predicate-margin ties
    resolve to the lower target mode.
    """
    cdef cnp.int32_t[:] kphi = np.ascontiguousarray(kinds_phi, dtype=np.int32)
    cdef cnp.int32_t[:, :] ephi = np.ascontiguousarray(exps_phi, dtype=np.int32)
    cdef cnp.int32_t[:] aphi = np.ascontiguousarray(args_phi, dtype=np.int32)
    cdef double[:, :, :] Wv = np.ascontiguousarray(W, dtype=np.float64)
    cdef cnp.int32_t[:] kpsi = np.ascontiguousarray(kinds_psi, dtype=np.int32)
    cdef cnp.int32_t[:, :] epsi = np.ascontiguousarray(exps_psi, dtype=np.int32)
    cdef cnp.int32_t[:] apsi = np.ascontiguousarray(args_psi, dtype=np.int32)
    cdef cnp.int32_t[:] rfrom = np.ascontiguousarray(rule_from, dtype=np.int32)
    cdef cnp.int32_t[:] rto = np.ascontiguousarray(rule_to, dtype=np.int32)
    cdef double[:, :] rv = np.ascontiguousarray(rule_v, dtype=np.float64)
    cdef double[:, :] uv = np.ascontiguousarray(u, dtype=np.float64)
    cdef double[:] y0v = np.ascontiguousarray(y0, dtype=np.float64)

    cdef int n = Wv.shape[2]
    cdef int m = uv.shape[1]
    cdef int p = kphi.shape[0]
    cdef int q = kpsi.shape[0]
    cdef int R = rfrom.shape[0]
    cdef int d = n + m

    Y_arr = np.zeros((steps + 1, n), dtype=np.float64)
    modes_arr = np.zeros(steps + 1, dtype=np.int32)
    cdef double[:, :] Y = Y_arr
    cdef cnp.int32_t[:] modes = modes_arr
    sbuf = np.zeros(d, dtype=np.float64)
    rowbuf = np.zeros(p if p > q else q, dtype=np.float64)
    cdef double[:] s = sbuf
    cdef double[:] row = rowbuf

    cdef int t, j, a, r, mode, best_to
    cdef double acc, g, best_g
    cdef bint diverged = False
    cdef int last = steps

    for j in range(n):
        Y[0, j] = y0v[j]
    modes[0] = m0

    for t in range(steps):
        mode = modes[t]
        for j in range(n):
            s[j] = Y[t, j]
        for a in range(m):
            s[n + a] = uv[t, a]
        for j in range(p):
            row[j] = _term(kphi[j], ephi[j], aphi[j], s)
        for j in range(n):
            acc = 0.0
            for a in range(p):
                acc += row[a] * Wv[mode - 1, a, j]
            Y[t + 1, j] = acc

        # next mode from the time-t state
        best_g = 0.0
        best_to = 0
        if R > 0:
            for j in range(q):
                row[j] = _term(kpsi[j], epsi[j], apsi[j], s)
            for r in range(R):
                if rfrom[r] != mode:
                    continue
                g = 0.0
                for j in range(q):
                    g += row[j] * rv[r, j]
                if g >= 0.0 and (best_to == 0 or g > best_g):
                    best_g = g
                    best_to = rto[r]
        modes[t + 1] = best_to if best_to != 0 else mode

        for j in range(n):
            if not isfinite(Y[t + 1, j]) or fabs(Y[t + 1, j]) > guard:
                diverged = True
                break
        if diverged:
            last = t + 1
            break

    return Y_arr[: last + 1], modes_arr[: last + 1], diverged
