"""Partial feedback linearization: torque law, output-zeroing outer loop, closed-loop field."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigError, NumericalSingularityError
from .gait import GaitParams, desired_outputs
from .model import ModelParams, PinnedTerms, pinned_dynamics

log = logging.getLogger(__name__)

COND_WARN = 1e8


@dataclass(frozen=True, eq=False)
class Gains:
    Kp: np.ndarray
    Kd: np.ndarray

    def __post_init__(self):
        Kp = np.atleast_2d(np.array(self.Kp, dtype=float))
        Kd = np.atleast_2d(np.array(self.Kd, dtype=float))
        for name, K in (("Kp", Kp), ("Kd", Kd)):
            if K.shape[0] != K.shape[1] or not np.allclose(K, K.T):
                raise ConfigError(f"{name} must be a symmetric square matrix")
            if np.linalg.eigvalsh(K).min() <= 0:
                raise ConfigError(f"{name} must be positive definite")
        if Kp.shape != Kd.shape:
            raise ConfigError("Kp and Kd must have the same shape")
        Kp.setflags(write=False)
        Kd.setflags(write=False)
        object.__setattr__(self, "Kp", Kp)
        object.__setattr__(self, "Kd", Kd)

    @classmethod
    def from_epsilon(cls, epsilon: float = 0.05, n_outputs: int = 2) -> "Gains":
        """Critically damped outputs with time constant ``epsilon`` (s)."""
        if not epsilon > 0:
            raise ConfigError("epsilon must be positive")
        I = np.eye(n_outputs)
        return cls(Kp=I / epsilon**2, Kd=2.0 * I / epsilon)

    def to_dict(self) -> dict:
        return {"Kp": self.Kp.tolist(), "Kd": self.Kd.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Gains":
        if "epsilon" in d:
            return cls.from_epsilon(float(d["epsilon"]), int(d.get("n_outputs", 2)))
        return cls(Kp=d["Kp"], Kd=d["Kd"])


def torque_from_v(q, qdot, v, F_T: float, p: ModelParams, terms: PinnedTerms | None = None):
    """Joint torques that make ``qdd_b = v`` for thrust ``F_T``."""
    t = terms if terms is not None else pinned_dynamics(q, qdot, p)
    D_NN = t.D_NN
    if abs(D_NN) < 1e-12:
        raise NumericalSingularityError("D_NN is singular")
    v = np.asarray(v, dtype=float)
    S = t.D_bb - np.outer(t.D_bN, t.D_Nb) / D_NN
    return S @ v + t.Omega_b + t.D_bN * (t.b_N * F_T - t.Omega_N) / D_NN - t.b_b * F_T


def pinned_acceleration(q, qdot, u, F_T: float, p: ModelParams):
    """Forward dynamics ``D qdd + Omega = B_tau u + B_F F_T``."""
    t = pinned_dynamics(q, qdot, p)
    rhs = t.B_tau @ np.asarray(u, dtype=float) + t.B_F * F_T - t.Omega
    return np.linalg.solve(t.D, rhs)


def decoupling_matrix(q, qdot, g: GaitParams, p: ModelParams, terms: PinnedTerms | None = None):
    """``LgLf y`` in the ``v`` input: ``I - h_d' a`` with ``a = c_b - c_N D_Nb / D_NN``."""
    t = terms if terms is not None else pinned_dynamics(q, qdot, p)
    alpha = float(g.c @ np.asarray(q, dtype=float))
    hp = desired_outputs(alpha, g).dh
    a = g.c[:-1] - g.c[-1] * t.D_Nb / t.D_NN
    return np.eye(g.c.size - 1) - np.outer(hp, a)


def feedback_linearizing_v(q, qdot, g: GaitParams, k: Gains, p: ModelParams, F_T: float = 0.0,
                           diagnostics: dict | None = None):
    """``v = -(LgLf y)^-1 (Lf^2 y + Kd ydot + Kp y)`` so that ``y'' + Kd y' + Kp y = 0``."""
    q = np.asarray(q, dtype=float)
    qdot = np.asarray(qdot, dtype=float)
    t = pinned_dynamics(q, qdot, p)
    alpha = float(g.c @ q)
    alpha_dot = float(g.c @ qdot)
    b = desired_outputs(alpha, g)
    y = q[:-1] - b.h
    ydot = qdot[:-1] - b.dh * alpha_dot
    L = decoupling_matrix(q, qdot, g, p, terms=t)
    cond = float(np.linalg.cond(L))
    if diagnostics is not None:
        diagnostics["decoupling_condition"] = cond
        diagnostics["ill_conditioned"] = cond > COND_WARN
    if cond > COND_WARN:
        log.warning("decoupling matrix ill-conditioned (cond=%.3g)", cond)
    Lf2 = -b.ddh * alpha_dot**2 - b.dh * (g.c[-1] * (t.b_N * F_T - t.Omega_N) / t.D_NN)
    return np.linalg.solve(L, -Lf2 - k.Kd @ ydot - k.Kp @ y)


def _kernel_args(g: GaitParams, k: Gains, p: ModelParams):
    return p.consts.kernel_args() + (g.c, g.A, g.alpha_i, g.alpha_f, k.Kp, k.Kd)


def closed_loop(q, qdot, F_T: float, g: GaitParams, k: Gains, p: ModelParams,
                channel: float | None = None):
    """Closed-loop ``(qdd, u, v, F_T)``; with ``channel`` the thrust is ``channel / b_N``."""
    use = channel is not None
    return kernels.closed_loop(np.asarray(q, dtype=float), np.asarray(qdot, dtype=float),
                               float(F_T), float(channel) if use else 0.0, int(use),
                               *_kernel_args(g, k, p))


def closed_loop_vector_field(x, F_T: float, g: GaitParams, k: Gains, p: ModelParams):
    """Momentum-form field: ``x = (q_b, q_N, qdot_b, sigma_N)``.

    Returns ``(qdot_b, qdot_N, v, sigma_N_dot)`` with
    ``sigma_N_dot = b_N F_T - dV/dq_N``.
    """
    x = np.asarray(x, dtype=float)
    n = (x.size + 1) // 2
    q = x[:n]
    qd_b = x[n:2 * n - 1]
    sigma = x[-1]
    t = pinned_dynamics(q, np.zeros(n), p)
    qd_N = (sigma - t.D_Nb @ qd_b) / t.D_NN
    qdot = np.append(qd_b, qd_N)
    v = feedback_linearizing_v(q, qdot, g, k, p, F_T=F_T)
    # Omega at zero velocity is the gravity vector G
    sigma_dot = t.b_N * F_T - t.Omega_N
    return np.concatenate([qdot, v, [sigma_dot]])
