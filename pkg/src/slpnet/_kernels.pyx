# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled solver hot kernels; twin of slpnet._kernels_np.

Same functions and semantics as the numpy fallback, with the per-iteration
work and the full ascent/polish loops running as C loops.  See the
fallback module for the conventions (array shapes, margin definitions,
packed complex gradients).
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs, log, sqrt

cnp.import_array()

BACKEND_NAME = "compiled"


cdef inline double _sign(double v) nogil:
    if v > 0.0:
        return 1.0
    elif v < 0.0:
        return -1.0
    return 0.0


cdef void _compute_z(double complex[:, ::1] H, double complex[:, ::1] X,
                     double complex[:, ::1] phasors, double complex[:, ::1] Z) nogil:
    cdef Py_ssize_t K = H.shape[0], N = H.shape[1], L = X.shape[1]
    cdef Py_ssize_t k, l, n
    cdef double complex acc
    for k in range(K):
        for l in range(L):
            acc = 0
            for n in range(N):
                acc = acc + H[k, n] * X[n, l]
            Z[k, l] = acc * phasors[k, l]


cdef double _frob2(double complex[:, ::1] A) nogil:
    cdef Py_ssize_t i, j
    cdef double s = 0.0
    for i in range(A.shape[0]):
        for j in range(A.shape[1]):
            s += A[i, j].real * A[i, j].real + A[i, j].imag * A[i, j].imag
    return s


cdef void _project_inplace(double complex[:, ::1] X, double budget) nogil:
    cdef double nrm2 = _frob2(X)
    cdef double scale
    cdef Py_ssize_t i, j
    if nrm2 > budget:
        scale = sqrt(budget / nrm2)
        for i in range(X.shape[0]):
            for j in range(X.shape[1]):
                X[i, j] = X[i, j] * scale


cdef double _softmin(double complex[:, ::1] H, double complex[:, ::1] X,
                     double complex[:, ::1] phasors, double sinphi, double cosphi,
                     double temp, double complex[:, ::1] Z) nogil:
    cdef Py_ssize_t K = H.shape[0], L = X.shape[1]
    cdef Py_ssize_t k, l
    cdef double zr, zi, mp, mm, m0, acc
    _compute_z(H, X, phasors, Z)
    m0 = 1e300
    for k in range(K):
        for l in range(L):
            zr = Z[k, l].real
            zi = Z[k, l].imag
            mp = sinphi * zr - cosphi * zi
            mm = sinphi * zr + cosphi * zi
            if mp < m0:
                m0 = mp
            if mm < m0:
                m0 = mm
    acc = 0.0
    for k in range(K):
        for l in range(L):
            zr = Z[k, l].real
            zi = Z[k, l].imag
            acc += exp(-(sinphi * zr - cosphi * zi - m0) / temp)
            acc += exp(-(sinphi * zr + cosphi * zi - m0) / temp)
    return m0 - temp * log(acc)


cdef double _softmin_grad(double complex[:, ::1] H, double complex[:, ::1] X,
                          double complex[:, ::1] phasors, double sinphi, double cosphi,
                          double temp, double complex[:, ::1] Z,
                          double complex[:, ::1] B, double complex[:, ::1] G) nogil:
    cdef Py_ssize_t K = H.shape[0], N = H.shape[1], L = X.shape[1]
    cdef Py_ssize_t k, l, n
    cdef double zr, zi, mp, mm, m0, acc, wp, wm, obj
    cdef double complex cp, cm, bacc
    obj = _softmin(H, X, phasors, sinphi, cosphi, temp, Z)
    m0 = 1e300
    for k in range(K):
        for l in range(L):
            zr = Z[k, l].real
            zi = Z[k, l].imag
            mp = sinphi * zr - cosphi * zi
            mm = sinphi * zr + cosphi * zi
            if mp < m0:
                m0 = mp
            if mm < m0:
                m0 = mm
    acc = 0.0
    for k in range(K):
        for l in range(L):
            zr = Z[k, l].real
            zi = Z[k, l].imag
            acc += exp(-(sinphi * zr - cosphi * zi - m0) / temp)
            acc += exp(-(sinphi * zr + cosphi * zi - m0) / temp)
    cp = sinphi - 1j * cosphi
    cm = sinphi + 1j * cosphi
    for k in range(K):
        for l in range(L):
            zr = Z[k, l].real
            zi = Z[k, l].imag
            wp = exp(-(sinphi * zr - cosphi * zi - m0) / temp) / acc
            wm = exp(-(sinphi * zr + cosphi * zi - m0) / temp) / acc
            B[k, l] = (phasors[k, l].real - 1j * phasors[k, l].imag) * (wp * cp + wm * cm)
    for n in range(N):
        for l in range(L):
            bacc = 0
            for k in range(K):
                bacc = bacc + (H[k, n].real - 1j * H[k, n].imag) * B[k, l]
            G[n, l] = bacc
    return obj


def qos_values(H, X, phasors, double sinphi, double cosphi):
    """QoS distance for every (user, column) pair; (K, L) float64."""
    cdef double complex[:, ::1] Hv = np.ascontiguousarray(H, dtype=np.complex128)
    cdef double complex[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.complex128)
    cdef double complex[:, ::1] Pv = np.ascontiguousarray(phasors, dtype=np.complex128)
    cdef Py_ssize_t K = Hv.shape[0], L = Xv.shape[1]
    Z_arr = np.empty((K, L), dtype=np.complex128)
    out_arr = np.empty((K, L), dtype=np.float64)
    cdef double complex[:, ::1] Z = Z_arr
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t k, l
    _compute_z(Hv, Xv, Pv, Z)
    for k in range(K):
        for l in range(L):
            out[k, l] = sinphi * Z[k, l].real - cosphi * fabs(Z[k, l].imag)
    return out_arr


def min_margin(H, X, phasors, double sinphi, double cosphi):
    """Smallest QoS distance and its location; (d, k, l, sign_of_im)."""
    cdef double complex[:, ::1] Hv = np.ascontiguousarray(H, dtype=np.complex128)
    cdef double complex[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.complex128)
    cdef double complex[:, ::1] Pv = np.ascontiguousarray(phasors, dtype=np.complex128)
    cdef Py_ssize_t K = Hv.shape[0], L = Xv.shape[1]
    Z_arr = np.empty((K, L), dtype=np.complex128)
    cdef double complex[:, ::1] Z = Z_arr
    cdef Py_ssize_t k, l, bk = 0, bl = 0
    cdef double d, best = 1e300, s = 0.0
    _compute_z(Hv, Xv, Pv, Z)
    for k in range(K):
        for l in range(L):
            d = sinphi * Z[k, l].real - cosphi * fabs(Z[k, l].imag)
            if d < best:
                best = d
                bk = k
                bl = l
    s = _sign(Z[bk, bl].imag)
    return best, int(bk), int(bl), s


def loss_backward(H, X, phasors, double sinphi, double cosphi, coeff):
    """Pull per-distance coefficients back to a packed gradient on X."""
    cdef double complex[:, ::1] Hv = np.ascontiguousarray(H, dtype=np.complex128)
    cdef double complex[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.complex128)
    cdef double complex[:, ::1] Pv = np.ascontiguousarray(phasors, dtype=np.complex128)
    cdef double[:, ::1] Cv = np.ascontiguousarray(coeff, dtype=np.float64)
    cdef Py_ssize_t K = Hv.shape[0], N = Hv.shape[1], L = Xv.shape[1]
    Z_arr = np.empty((K, L), dtype=np.complex128)
    B_arr = np.empty((K, L), dtype=np.complex128)
    G_arr = np.empty((N, L), dtype=np.complex128)
    cdef double complex[:, ::1] Z = Z_arr
    cdef double complex[:, ::1] B = B_arr
    cdef double complex[:, ::1] G = G_arr
    cdef Py_ssize_t k, l, n
    cdef double s
    cdef double complex bacc
    _compute_z(Hv, Xv, Pv, Z)
    for k in range(K):
        for l in range(L):
            s = _sign(Z[k, l].imag)
            B[k, l] = (Pv[k, l].real - 1j * Pv[k, l].imag) * Cv[k, l] * (sinphi - 1j * s * cosphi)
    for n in range(N):
        for l in range(L):
            bacc = 0
            for k in range(K):
                bacc = bacc + (Hv[k, n].real - 1j * Hv[k, n].imag) * B[k, l]
            G[n, l] = bacc
    return G_arr


def softmin_objective(H, X, phasors, double sinphi, double cosphi, double temp):
    cdef double complex[:, ::1] Hv = np.ascontiguousarray(H, dtype=np.complex128)
    cdef double complex[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.complex128)
    cdef double complex[:, ::1] Pv = np.ascontiguousarray(phasors, dtype=np.complex128)
    Z_arr = np.empty((Hv.shape[0], Xv.shape[1]), dtype=np.complex128)
    cdef double complex[:, ::1] Z = Z_arr
    return _softmin(Hv, Xv, Pv, sinphi, cosphi, temp, Z)


def softmin_eval(H, X, phasors, double sinphi, double cosphi, double temp):
    cdef double complex[:, ::1] Hv = np.ascontiguousarray(H, dtype=np.complex128)
    cdef double complex[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.complex128)
    cdef double complex[:, ::1] Pv = np.ascontiguousarray(phasors, dtype=np.complex128)
    cdef Py_ssize_t K = Hv.shape[0], N = Hv.shape[1], L = Xv.shape[1]
    Z_arr = np.empty((K, L), dtype=np.complex128)
    B_arr = np.empty((K, L), dtype=np.complex128)
    G_arr = np.empty((N, L), dtype=np.complex128)
    cdef double complex[:, ::1] Z = Z_arr
    cdef double complex[:, ::1] B = B_arr
    cdef double complex[:, ::1] G = G_arr
    cdef double obj = _softmin_grad(Hv, Xv, Pv, sinphi, cosphi, temp, Z, B, G)
    return obj, G_arr


def ascent_run(H, X, phasors, double sinphi, double cosphi, double budget,
               temps, long iters_per_round, double improve_abs, double step_init):
    """Annealed projected gradient ascent; X is updated in place."""
    X_arr = np.ascontiguousarray(X, dtype=np.complex128)
    cdef double complex[:, ::1] Hv = np.ascontiguousarray(H, dtype=np.complex128)
    cdef double complex[:, ::1] Xv = X_arr
    cdef double complex[:, ::1] Pv = np.ascontiguousarray(phasors, dtype=np.complex128)
    cdef double[::1] temps_v = np.ascontiguousarray(temps, dtype=np.float64)
    cdef Py_ssize_t K = Hv.shape[0], N = Hv.shape[1], L = Xv.shape[1]
    Z_arr = np.empty((K, L), dtype=np.complex128)
    B_arr = np.empty((K, L), dtype=np.complex128)
    G_arr = np.empty((N, L), dtype=np.complex128)
    Xt_arr = np.empty((N, L), dtype=np.complex128)
    cdef double complex[:, ::1] Z = Z_arr
    cdef double complex[:, ::1] B = B_arr
    cdef double complex[:, ::1] G = G_arr
    cdef double complex[:, ::1] Xt = Xt_arr
    cdef double step, temp, obj, obj_new, gnorm2, inc, prev
    cdef Py_ssize_t ti, it, ls, n, l
    cdef long steps = 0
    cdef bint converged = True, accepted, stalled
    _project_inplace(Xv, budget)
    for ti in range(temps_v.shape[0]):
        temp = temps_v[ti]
        # the workable step scale changes with temperature, so re-derive it
        # from the first gradient of every round
        step = step_init
        prev = -1e300
        it = 0
        stalled = False
        while it < iters_per_round:
            obj = _softmin_grad(Hv, Xv, Pv, sinphi, cosphi, temp, Z, B, G)
            gnorm2 = _frob2(G)
            if gnorm2 < 1e-30:
                stalled = True
                break
            if step <= 0.0:
                step = 0.3 * sqrt(budget / gnorm2)
            obj_new = obj
            accepted = False
            for ls in range(60):
                for n in range(N):
                    for l in range(L):
                        Xt[n, l] = Xv[n, l] + step * G[n, l]
                _project_inplace(Xt, budget)
                inc = 0.0
                for n in range(N):
                    for l in range(L):
                        inc += G[n, l].real * (Xt[n, l].real - Xv[n, l].real)
                        inc += G[n, l].imag * (Xt[n, l].imag - Xv[n, l].imag)
                if inc > 0.0:
                    obj_new = _softmin(Hv, Xt, Pv, sinphi, cosphi, temp, Z)
                    if obj_new >= obj + 1e-4 * inc:
                        accepted = True
                        break
                step *= 0.5
            it += 1
            steps += 1
            if not accepted:
                stalled = True
                break
            for n in range(N):
                for l in range(L):
                    Xv[n, l] = Xt[n, l]
            step *= 1.3
            if obj_new - prev <= improve_abs and it > 1:
                stalled = True
                prev = obj_new
                break
            prev = obj_new
        if not stalled and it >= iters_per_round:
            converged = False
    if X_arr is not X:
        X[:] = X_arr
    return steps, bool(converged)


def polish_run(H, X, phasors, double sinphi, double cosphi, double budget, long iters):
    """Subgradient polish on the exact min margin; X becomes the best iterate."""
    X_arr = np.ascontiguousarray(X, dtype=np.complex128)
    cdef double complex[:, ::1] Hv = np.ascontiguousarray(H, dtype=np.complex128)
    cdef double complex[:, ::1] Xv = X_arr
    cdef double complex[:, ::1] Pv = np.ascontiguousarray(phasors, dtype=np.complex128)
    cdef Py_ssize_t K = Hv.shape[0], N = Hv.shape[1], L = Xv.shape[1]
    Z_arr = np.empty((K, L), dtype=np.complex128)
    best_arr = X_arr.copy()
    cdef double complex[:, ::1] Z = Z_arr
    cdef double complex[:, ::1] best = best_arr
    cdef Py_ssize_t k, l, n, bk, bl, i
    cdef double d, t, best_t, s, gnorm2, target, stepsz, cap
    cdef double complex gval
    cdef long steps = 0
    cap = 0.1 * sqrt(budget)
    _compute_z(Hv, Xv, Pv, Z)
    best_t = 1e300
    for k in range(K):
        for l in range(L):
            d = sinphi * Z[k, l].real - cosphi * fabs(Z[k, l].imag)
            if d < best_t:
                best_t = d
    for i in range(iters):
        _compute_z(Hv, Xv, Pv, Z)
        d = 1e300
        bk = 0
        bl = 0
        for k in range(K):
            for l in range(L):
                t = sinphi * Z[k, l].real - cosphi * fabs(Z[k, l].imag)
                if t < d:
                    d = t
                    bk = k
                    bl = l
        s = _sign(Z[bk, bl].imag)
        gnorm2 = 0.0
        for n in range(N):
            gval = (sinphi - 1j * s * cosphi) * (Pv[bk, bl].real - 1j * Pv[bk, bl].imag) \
                   * (Hv[bk, n].real - 1j * Hv[bk, n].imag)
            gnorm2 += gval.real * gval.real + gval.imag * gval.imag
        if gnorm2 < 1e-30:
            break
        target = best_t + max(1e-3 * fabs(best_t), 1e-12)
        stepsz = (target - d) / gnorm2
        if stepsz > cap / sqrt(gnorm2):
            stepsz = cap / sqrt(gnorm2)
        for n in range(N):
            gval = (sinphi - 1j * s * cosphi) * (Pv[bk, bl].real - 1j * Pv[bk, bl].imag) \
                   * (Hv[bk, n].real - 1j * Hv[bk, n].imag)
            Xv[n, bl] = Xv[n, bl] + stepsz * gval
        _project_inplace(Xv, budget)
        steps += 1
        _compute_z(Hv, Xv, Pv, Z)
        t = 1e300
        for k in range(K):
            for l in range(L):
                d = sinphi * Z[k, l].real - cosphi * fabs(Z[k, l].imag)
                if d < t:
                    t = d
        if t > best_t:
            best_t = t
            for n in range(N):
                for l in range(L):
                    best[n, l] = Xv[n, l]
    for n in range(N):
        for l in range(L):
            Xv[n, l] = best[n, l]
    if X_arr is not X:
        X[:] = X_arr
    return best_t, steps
