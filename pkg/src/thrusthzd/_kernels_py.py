"""Reference (numpy) implementation of the hot kernels.

The compiled module ``_ckernels`` mirrors these signatures exactly; the
selection happens in :mod:`thrusthzd.kernels`.
"""

import math

import numpy as np


def _binom_rows(M):
    return np.array([math.comb(M, k) for k in range(M + 1)], dtype=float)


def bezier(A, s):
    """Bezier value and first two s-derivatives for each row of ``A`` (no clamping)."""
    A = np.asarray(A, dtype=float)
    M = A.shape[1] - 1
    t = 1.0 - s
    k = np.arange(M + 1)
    basis = _binom_rows(M) * s**k * t ** (M - k)
    h = A @ basis
    k1 = np.arange(M)
    b1 = _binom_rows(M - 1) * s**k1 * t ** (M - 1 - k1)
    dh = M * (np.diff(A, axis=1) @ b1)
    if M >= 2:
        k2 = np.arange(M - 1)
        b2 = _binom_rows(M - 2) * s**k2 * t ** (M - 2 - k2)
        ddh = M * (M - 1) * (np.diff(A, n=2, axis=1) @ b2)
    else:
        ddh = np.zeros(A.shape[0])
    return h, dh, ddh


def pinned_terms(q, qd, T, Mbar, mu, K_mount, phi_mount, g, thrust_angle, body_fixed, torso):
    th = T @ q
    thd = T @ qd
    delta = th[:, None] - th[None, :]
    D = T.T @ (Mbar * np.cos(delta)) @ T
    Omega = T.T @ ((Mbar * np.sin(delta)) @ (thd * thd) - g * mu * np.sin(th))
    ang = th + phi_mount
    jx = (np.cos(ang) * K_mount) @ T
    jy = (-np.sin(ang) * K_mount) @ T
    tang = thrust_angle - (th[torso] if body_fixed else 0.0)
    BF = jx * math.cos(tang) + jy * math.sin(tang)
    return D, Omega, BF


def closed_loop(q, qd, F, channel, use_channel,
                T, Mbar, mu, K_mount, phi_mount, g, thrust_angle, body_fixed, torso,
                c, A, alpha_i, alpha_f, Kp, Kd):
    """Closed-loop accelerations under the input-output linearizing law.

    Returns ``(qdd, u, v, F)`` where ``F`` is the physical thrust actually
    applied (equal to ``channel / b_N`` when ``use_channel`` is set).
    """
    D, Omega, BF = pinned_terms(q, qd, T, Mbar, mu, K_mount, phi_mount,
                                g, thrust_angle, body_fixed, torso)
    n = q.shape[0]
    D_bb, D_bN, D_Nb, D_NN = D[:-1, :-1], D[:-1, -1], D[-1, :-1], D[-1, -1]
    Om_b, Om_N = Omega[:-1], Omega[-1]
    b_b, b_N = BF[:-1], BF[-1]
    if use_channel:
        if abs(b_N) < 1e-9:
            raise ZeroDivisionError("thrust channel gain b_N vanished")
        F = channel / b_N
    span = alpha_f - alpha_i
    alpha = c @ q
    alpha_dot = c @ qd
    h, dh, ddh = bezier(A, (alpha - alpha_i) / span)
    hp = dh / span
    hpp = ddh / (span * span)
    y = q[: n - 1] - h
    yd = qd[: n - 1] - hp * alpha_dot
    c_b, c_N = c[:-1], c[-1]
    a = c_b - c_N * D_Nb / D_NN
    LgLf = np.eye(n - 1) - np.outer(hp, a)
    Lf2 = -hpp * alpha_dot**2 - hp * (c_N * (b_N * F - Om_N) / D_NN)
    v = np.linalg.solve(LgLf, -Lf2 - Kd @ yd - Kp @ y)
    u = (D_bb - np.outer(D_bN, D_Nb) / D_NN) @ v + Om_b + D_bN * (b_N * F - Om_N) / D_NN - b_b * F
    qdd = np.empty(n)
    qdd[:-1] = v
    qdd[-1] = (b_N * F - Om_N - D_Nb @ v) / D_NN
    return qdd, u, v, F
