# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; same signatures and results as ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, fabs

cnp.import_array()

DEF MAXN = 8


cdef void _pinned(const double[::1] q, const double[::1] qd,
                  const double[:, ::1] T, const double[:, ::1] Mbar, const double[::1] mu,
                  const double[::1] K_mount, const double[::1] phi_mount,
                  double g, double thrust_angle, int body_fixed, int torso,
                  double[:, ::1] D, double[::1] Om, double[::1] BF) noexcept nogil:
    cdef int n = q.shape[0]
    cdef int nl = T.shape[0]
    cdef double th[MAXN]
    cdef double thd[MAXN]
    cdef double Dab[MAXN][MAXN]
    cdef double oab[MAXN]
    cdef double jx[MAXN]
    cdef double jy[MAXN]
    cdef int i, j, k, l
    cdef double acc, d, tang, ang
    for j in range(nl):
        acc = 0.0
        d = 0.0
        for k in range(n):
            acc += T[j, k] * q[k]
            d += T[j, k] * qd[k]
        th[j] = acc
        thd[j] = d
    for j in range(nl):
        oab[j] = -g * mu[j] * sin(th[j])
        for k in range(nl):
            d = th[j] - th[k]
            Dab[j][k] = Mbar[j, k] * cos(d)
            oab[j] += Mbar[j, k] * sin(d) * thd[k] * thd[k]
    # D = T' Dab T, Omega = T' oab
    for i in range(n):
        acc = 0.0
        for j in range(nl):
            acc += T[j, i] * oab[j]
        Om[i] = acc
        for k in range(n):
            acc = 0.0
            for j in range(nl):
                if T[j, i] != 0.0:
                    for l in range(nl):
                        acc += T[j, i] * Dab[j][l] * T[l, k]
            D[i, k] = acc
    tang = thrust_angle
    if body_fixed:
        tang -= th[torso]
    for j in range(nl):
        ang = th[j] + phi_mount[j]
        jx[j] = cos(ang) * K_mount[j]
        jy[j] = -sin(ang) * K_mount[j]
    for i in range(n):
        acc = 0.0
        for j in range(nl):
            acc += (jx[j] * cos(tang) + jy[j] * sin(tang)) * T[j, i]
        BF[i] = acc


def pinned_terms(q, qd, T, Mbar, mu, K_mount, phi_mount, double g, double thrust_angle,
                 int body_fixed, int torso):
    cdef const double[::1] qv = np.ascontiguousarray(q, dtype=np.float64)
    cdef const double[::1] qdv = np.ascontiguousarray(qd, dtype=np.float64)
    cdef int n = qv.shape[0]
    if n > MAXN or T.shape[0] > MAXN:
        raise ValueError("compiled kernels support at most %d coordinates" % MAXN)
    D = np.empty((n, n))
    Om = np.empty(n)
    BF = np.empty(n)
    _pinned(qv, qdv, np.ascontiguousarray(T, dtype=np.float64),
            np.ascontiguousarray(Mbar, dtype=np.float64),
            np.ascontiguousarray(mu, dtype=np.float64),
            np.ascontiguousarray(K_mount, dtype=np.float64),
            np.ascontiguousarray(phi_mount, dtype=np.float64),
            g, thrust_angle, body_fixed, torso, D, Om, BF)
    return D, Om, BF


cdef void _bezier(const double[:, ::1] A, double s, double* h, double* dh, double* ddh) noexcept nogil:
    # de Casteljau-free direct Bernstein sums; M is small
    cdef int r = A.shape[0]
    cdef int M = A.shape[1] - 1
    cdef double t = 1.0 - s
    cdef double pw_s[MAXN * 4]
    cdef double pw_t[MAXN * 4]
    cdef int i, k
    cdef double b, acc0, acc1, acc2
    pw_s[0] = 1.0
    pw_t[0] = 1.0
    for k in range(1, M + 1):
        pw_s[k] = pw_s[k - 1] * s
        pw_t[k] = pw_t[k - 1] * t
    for i in range(r):
        acc0 = 0.0
        acc1 = 0.0
        acc2 = 0.0
        # order M
        b = 1.0
        for k in range(M + 1):
            acc0 += A[i, k] * b * pw_s[k] * pw_t[M - k]
            b = b * (M - k) / (k + 1)
        b = 1.0
        for k in range(M):
            acc1 += (A[i, k + 1] - A[i, k]) * b * pw_s[k] * pw_t[M - 1 - k]
            b = b * (M - 1 - k) / (k + 1)
        if M >= 2:
            b = 1.0
            for k in range(M - 1):
                acc2 += (A[i, k + 2] - 2.0 * A[i, k + 1] + A[i, k]) * b * pw_s[k] * pw_t[M - 2 - k]
                b = b * (M - 2 - k) / (k + 1)
        h[i] = acc0
        dh[i] = M * acc1
        ddh[i] = M * (M - 1) * acc2


cdef int _solve(double* Amat, double* rhs, int m) noexcept nogil:
    # Gaussian elimination with partial pivoting on an m x m row-major matrix.
    cdef int i, j, k, piv
    cdef double best, tmp, f
    for k in range(m):
        piv = k
        best = fabs(Amat[k * m + k])
        for i in range(k + 1, m):
            if fabs(Amat[i * m + k]) > best:
                best = fabs(Amat[i * m + k])
                piv = i
        if best == 0.0:
            return 1
        if piv != k:
            for j in range(m):
                tmp = Amat[k * m + j]
                Amat[k * m + j] = Amat[piv * m + j]
                Amat[piv * m + j] = tmp
            tmp = rhs[k]
            rhs[k] = rhs[piv]
            rhs[piv] = tmp
        for i in range(k + 1, m):
            f = Amat[i * m + k] / Amat[k * m + k]
            for j in range(k, m):
                Amat[i * m + j] -= f * Amat[k * m + j]
            rhs[i] -= f * rhs[k]
    for i in range(m - 1, -1, -1):
        tmp = rhs[i]
        for j in range(i + 1, m):
            tmp -= Amat[i * m + j] * rhs[j]
        rhs[i] = tmp / Amat[i * m + i]
    return 0


def closed_loop(q, qd, double F, double channel, int use_channel,
                T, Mbar, mu, K_mount, phi_mount, double g, double thrust_angle,
                int body_fixed, int torso,
                c, A, double alpha_i, double alpha_f, Kp, Kd):
    cdef const double[::1] qv = np.ascontiguousarray(q, dtype=np.float64)
    cdef const double[::1] qdv = np.ascontiguousarray(qd, dtype=np.float64)
    cdef const double[::1] cv = np.ascontiguousarray(c, dtype=np.float64)
    cdef const double[:, ::1] Av = np.ascontiguousarray(A, dtype=np.float64)
    cdef const double[:, ::1] Kpv = np.ascontiguousarray(Kp, dtype=np.float64)
    cdef const double[:, ::1] Kdv = np.ascontiguousarray(Kd, dtype=np.float64)
    cdef int n = qv.shape[0]
    cdef int m = n - 1
    if n > MAXN or T.shape[0] > MAXN or Av.shape[1] > 3 * MAXN:
        raise ValueError("compiled kernels: dimensions too large")
    D_arr = np.empty((n, n))
    Om_arr = np.empty(n)
    BF_arr = np.empty(n)
    cdef double[:, ::1] D = D_arr
    cdef double[::1] Om = Om_arr
    cdef double[::1] BF = BF_arr
    _pinned(qv, qdv, np.ascontiguousarray(T, dtype=np.float64),
            np.ascontiguousarray(Mbar, dtype=np.float64),
            np.ascontiguousarray(mu, dtype=np.float64),
            np.ascontiguousarray(K_mount, dtype=np.float64),
            np.ascontiguousarray(phi_mount, dtype=np.float64),
            g, thrust_angle, body_fixed, torso, D, Om, BF)
    cdef double D_NN = D[m, m]
    cdef double b_N = BF[m]
    if use_channel:
        if fabs(b_N) < 1e-9:
            raise ZeroDivisionError("thrust channel gain b_N vanished")
        F = channel / b_N
    cdef double span = alpha_f - alpha_i
    cdef double alpha = 0.0
    cdef double alpha_dot = 0.0
    cdef int i, j
    for i in range(n):
        alpha += cv[i] * qv[i]
        alpha_dot += cv[i] * qdv[i]
    cdef double h[MAXN]
    cdef double dh[MAXN]
    cdef double ddh[MAXN]
    _bezier(Av, (alpha - alpha_i) / span, h, dh, ddh)
    cdef double y[MAXN]
    cdef double yd[MAXN]
    cdef double a[MAXN]
    cdef double L[MAXN * MAXN]
    cdef double rhs[MAXN]
    cdef double cN = cv[m]
    cdef double coef = cN / D_NN
    cdef double hp, hpp, acc
    for i in range(m):
        hp = dh[i] / span
        dh[i] = hp
        ddh[i] = ddh[i] / (span * span)
        y[i] = qv[i] - h[i]
        yd[i] = qdv[i] - hp * alpha_dot
        a[i] = cv[i] - coef * D[m, i]
    for i in range(m):
        for j in range(m):
            L[i * m + j] = (1.0 if i == j else 0.0) - dh[i] * a[j]
        acc = ddh[i] * alpha_dot * alpha_dot + dh[i] * coef * (b_N * F - Om[m])
        for j in range(m):
            acc -= Kdv[i, j] * yd[j] + Kpv[i, j] * y[j]
        rhs[i] = acc
    if _solve(L, rhs, m) != 0:
        raise np.linalg.LinAlgError("singular decoupling matrix")
    v_arr = np.empty(m)
    u_arr = np.empty(m)
    qdd_arr = np.empty(n)
    cdef double[::1] v = v_arr
    cdef double[::1] u = u_arr
    cdef double[::1] qdd = qdd_arr
    cdef double last = b_N * F - Om[m]
    for i in range(m):
        v[i] = rhs[i]
        qdd[i] = rhs[i]
        last -= D[m, i] * rhs[i]
    qdd[m] = last / D_NN
    for i in range(m):
        acc = Om[i] + D[i, m] * (b_N * F - Om[m]) / D_NN - BF[i] * F
        for j in range(m):
            acc += (D[i, j] - D[i, m] * D[m, j] / D_NN) * rhs[j]
        u[i] = acc
    return qdd_arr, u_arr, v_arr, F
