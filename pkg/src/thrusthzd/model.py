"""Planar 3-link walker: pinned and unpinned Lagrangian terms, kinematics.

Conventions
-----------
Pinned coordinates ``q = (q1, q2, q3)``:

* ``q3`` is the absolute stance-leg angle from vertical (positive leans the
  hip forward, i.e. toward +x),
* ``q1`` is the relative hip angle between stance leg and torso,
* ``q2`` is the relative hip angle between torso and swing leg.

The absolute link angles are ``theta = T q`` with ``theta = (stance, torso,
swing)``.  Both hip motors act on relative angles, so the torque map is
``[I; 0]``.  A link at angle ``th`` points along ``u(th) = (sin th, cos th)``;
the stance foot sits at ``hip - l u(theta_stance)`` and the swing foot at
``hip - l u(theta_swing)``.

All masses are point masses (the classic 3-link walker), which gives every
Lagrangian term in closed form:

``D = T' (Mbar * cos(th_j - th_k)) T``,
``C qdot = T' (Mbar * sin(th_j - th_k)) thdot**2``,
``G = -g T' (mu * sin th)``.

The unpinned model appends the stance-foot position ``(x1, y1)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from . import kernels
from .errors import ConfigError, InvalidStateError

N_DOF = 3
STANCE, TORSO, SWING = 0, 1, 2


@dataclass(frozen=True)
class ModelParams:
    leg_mass: float = 5.0
    hip_mass: float = 15.0
    torso_mass: float = 10.0
    leg_length: float = 1.0
    torso_length: float = 0.5
    leg_com_ratio: float = 0.5
    gravity: float = 9.81
    # (along torso axis, perpendicular offset) measured from the hip
    thruster_mount: tuple[float, float] = (0.5, 0.0)
    thruster_angle_theta: float = math.pi / 2
    friction_mu: float = 0.7
    thrust_body_fixed: bool = False

    def __post_init__(self):
        object.__setattr__(self, "thruster_mount", tuple(float(v) for v in self.thruster_mount))
        for name in ("leg_mass", "hip_mass", "torso_mass", "leg_length", "torso_length", "gravity"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be finite and > 0, got {v!r}")
        if not (0.0 < self.leg_com_ratio <= 1.0):
            raise ConfigError(f"leg_com_ratio must lie in (0, 1], got {self.leg_com_ratio!r}")
        if not (math.isfinite(self.friction_mu) and self.friction_mu > 0):
            raise ConfigError(f"friction_mu must be > 0, got {self.friction_mu!r}")
        if len(self.thruster_mount) != 2 or not all(map(math.isfinite, self.thruster_mount)):
            raise ConfigError("thruster_mount must be a finite 2-vector")
        if not math.isfinite(self.thruster_angle_theta):
            raise ConfigError("thruster_angle_theta must be finite")

    @property
    def total_mass(self) -> float:
        return 2 * self.leg_mass + self.hip_mass + self.torso_mass

    def replace(self, **changes) -> "ModelParams":
        d = asdict(self)
        d.update(changes)
        return ModelParams(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["thruster_mount"] = list(self.thruster_mount)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown ModelParams fields: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ModelParams":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @cached_property
    def consts(self) -> "ChainConstants":
        return ChainConstants.from_params(self)


@dataclass(frozen=True)
class ChainConstants:
    """Packed constant arrays consumed by the numerical kernels."""

    T: np.ndarray  # (links, N) absolute-angle map
    Mbar: np.ndarray  # (links, links) sum of m_k K_kj K_kl
    mu: np.ndarray  # (links,) sum of m_k K_kj
    K_points: np.ndarray  # (points, links)
    masses: np.ndarray  # (points,)
    K_foot: np.ndarray  # (links,) swing foot
    K_mount: np.ndarray  # (links,)
    phi_mount: np.ndarray  # (links,) angle offsets of the mount vector
    gravity: float
    thrust_angle: float
    body_fixed: bool
    torso_link: int = TORSO
    total_mass: float = field(default=0.0)

    @classmethod
    def from_params(cls, p: ModelParams) -> "ChainConstants":
        l, L, r = p.leg_length, p.torso_length, p.leg_com_ratio
        T = np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 1.0], [1.0, 1.0, 1.0]])
        K_points = np.array([
            [(1.0 - r) * l, 0.0, 0.0],  # stance leg mass
            [l, 0.0, 0.0],  # hip
            [l, L, 0.0],  # torso tip
            [l, 0.0, -r * l],  # swing leg mass
        ])
        masses = np.array([p.leg_mass, p.hip_mass, p.torso_mass, p.leg_mass])
        Mbar = np.einsum("k,kj,kl->jl", masses, K_points, K_points)
        mu = masses @ K_points
        a, b = p.thruster_mount
        rho, phi = math.hypot(a, b), math.atan2(b, a)
        return cls(
            T=T,
            Mbar=Mbar,
            mu=mu,
            K_points=K_points,
            masses=masses,
            K_foot=np.array([l, 0.0, -l]),
            K_mount=np.array([l, rho, 0.0]),
            phi_mount=np.array([0.0, phi, 0.0]),
            gravity=p.gravity,
            thrust_angle=p.thruster_angle_theta,
            body_fixed=bool(p.thrust_body_fixed),
            total_mass=float(masses.sum()),
        )

    def kernel_args(self):
        return (self.T, self.Mbar, self.mu, self.K_mount, self.phi_mount,
                self.gravity, self.thrust_angle, int(self.body_fixed), self.torso_link)


@dataclass(frozen=True)
class PinnedTerms:
    D: np.ndarray
    Omega: np.ndarray
    B_tau: np.ndarray
    B_F: np.ndarray

    @property
    def n(self) -> int:
        return self.D.shape[0]

    @property
    def D_bb(self):
        return self.D[:-1, :-1]

    @property
    def D_bN(self):
        return self.D[:-1, -1]

    @property
    def D_Nb(self):
        return self.D[-1, :-1]

    @property
    def D_NN(self) -> float:
        return float(self.D[-1, -1])

    @property
    def Omega_b(self):
        return self.Omega[:-1]

    @property
    def Omega_N(self) -> float:
        return float(self.Omega[-1])

    @property
    def b_b(self):
        return self.B_F[:-1]

    @property
    def b_N(self) -> float:
        return float(self.B_F[-1])


@dataclass(frozen=True)
class UnpinnedTerms:
    D_u: np.ndarray
    Omega_u: np.ndarray
    B_1: np.ndarray
    B_Fu: np.ndarray
    E_2: np.ndarray


def _check(*arrays):
    out = []
    for a in arrays:
        a = np.asarray(a, dtype=float)
        if not np.all(np.isfinite(a)):
            raise InvalidStateError("state contains non-finite values")
        out.append(a)
    return out


def _u(th):
    return np.stack([np.sin(th), np.cos(th)])


def _du(th):
    return np.stack([np.cos(th), -np.sin(th)])


def link_angles(q, p: ModelParams) -> np.ndarray:
    return p.consts.T @ np.asarray(q, dtype=float)


def thrust_direction(q, p: ModelParams) -> np.ndarray:
    ang = p.thruster_angle_theta
    if p.thrust_body_fixed:
        ang -= link_angles(q, p)[TORSO]
    return np.array([math.cos(ang), math.sin(ang)])


def pinned_dynamics(q, qdot, p: ModelParams) -> PinnedTerms:
    q, qdot = _check(q, qdot)
    D, Omega, BF = kernels.pinned_terms(q, qdot, *p.consts.kernel_args())
    B_tau = np.vstack([np.eye(N_DOF - 1), np.zeros((1, N_DOF - 1))])
    return PinnedTerms(D=D, Omega=Omega, B_tau=B_tau, B_F=BF)


def coriolis_matrix(q, qdot, p: ModelParams) -> np.ndarray:
    """Christoffel-consistent C(q, qdot) with C qdot equal to the velocity terms of Omega."""
    q, qdot = _check(q, qdot)
    c = p.consts
    th, thd = c.T @ q, c.T @ qdot
    C_abs = c.Mbar * np.sin(th[:, None] - th[None, :]) * thd[None, :]
    return c.T.T @ C_abs @ c.T


def gravity_vector(q, p: ModelParams) -> np.ndarray:
    (q,) = _check(q)
    c = p.consts
    return -c.gravity * c.T.T @ (c.mu * np.sin(c.T @ q))


def point_positions(q, p: ModelParams, foot=(0.0, 0.0)) -> np.ndarray:
    """Positions of the point masses (rows) for stance foot at ``foot``."""
    c = p.consts
    th = c.T @ np.asarray(q, dtype=float)
    return np.asarray(foot, dtype=float) + (c.K_points @ _u(th).T)


def mount_position(q, p: ModelParams, foot=(0.0, 0.0)) -> np.ndarray:
    c = p.consts
    th = c.T @ np.asarray(q, dtype=float) + c.phi_mount
    return np.asarray(foot, dtype=float) + _u(th) @ c.K_mount


def hip_position(q, p: ModelParams, foot=(0.0, 0.0)) -> np.ndarray:
    th = link_angles(q, p)
    return np.asarray(foot, dtype=float) + p.leg_length * _u(th[STANCE])


def swing_foot_position(q_u, p: ModelParams):
    """Swing-foot position ``p2`` and its Jacobian ``E2 = dp2/dq_u``."""
    (q_u,) = _check(q_u)
    c = p.consts
    q, foot = q_u[:N_DOF], q_u[N_DOF:N_DOF + 2]
    th = c.T @ q
    p2 = foot + _u(th) @ c.K_foot
    J = (_du(th) * c.K_foot) @ c.T
    E2 = np.hstack([J, np.eye(2)])
    return p2, E2


def swing_foot_height(q, p: ModelParams) -> float:
    c = p.consts
    th = c.T @ np.asarray(q, dtype=float)
    return float(np.cos(th) @ c.K_foot)


def unpinned_dynamics(q_u, q_u_dot, p: ModelParams) -> UnpinnedTerms:
    q_u, q_u_dot = _check(q_u, q_u_dot)
    c = p.consts
    n = N_DOF
    q, qd = q_u[:n], q_u_dot[:n]
    pin = pinned_dynamics(q, qd, p)
    th, thd = c.T @ q, c.T @ qd
    A = (_du(th) * c.mu) @ c.T  # 2 x N, sum_k m_k J_k
    D_u = np.zeros((n + 2, n + 2))
    D_u[:n, :n] = pin.D
    D_u[n:, :n] = A
    D_u[:n, n:] = A.T
    D_u[n:, n:] = c.total_mass * np.eye(2)
    Omega_u = np.empty(n + 2)
    Omega_u[:n] = pin.Omega
    Omega_u[n:] = -(_u(th) * c.mu) @ thd**2 + np.array([0.0, c.total_mass * c.gravity])
    B_1 = np.zeros((n + 2, n))
    B_1[: n - 1, : n - 1] = np.eye(n - 1)
    B_1[:n, n - 1] = pin.B_F
    _, E2 = swing_foot_position(q_u, p)
    return UnpinnedTerms(D_u=D_u, Omega_u=Omega_u, B_1=B_1,
                         B_Fu=thrust_direction(q, p), E_2=E2)


def angular_momentum(q, qdot, p: ModelParams) -> float:
    """Angular momentum about the stance foot, ``sigma_N = [D_Nb D_NN] qdot``."""
    q, qdot = _check(q, qdot)
    c = p.consts
    th = c.T @ q
    D = c.T.T @ (c.Mbar * np.cos(th[:, None] - th[None, :])) @ c.T
    return float(D[-1] @ qdot)


def total_energy(q, qdot, p: ModelParams, foot_height: float = 0.0):
    """Kinetic and potential energy of the pinned robot (J)."""
    q, qdot = _check(q, qdot)
    c = p.consts
    th = c.T @ q
    D = c.T.T @ (c.Mbar * np.cos(th[:, None] - th[None, :])) @ c.T
    ke = 0.5 * float(qdot @ D @ qdot)
    pe = c.gravity * (float(c.mu @ np.cos(th)) + c.total_mass * foot_height)
    return ke, pe


# -- batch helpers used by the zero-dynamics grids ---------------------------

def inertia_batch(Q, p: ModelParams) -> np.ndarray:
    """``D(q)`` for each row of ``Q`` (shape (m, N)) -> (m, N, N)."""
    c = p.consts
    TH = np.atleast_2d(Q) @ c.T.T
    cosd = np.cos(TH[:, :, None] - TH[:, None, :])
    return np.einsum("ja,mjk,kb->mab", c.T, c.Mbar * cosd, c.T)


def gravity_batch(Q, p: ModelParams) -> np.ndarray:
    c = p.consts
    TH = np.atleast_2d(Q) @ c.T.T
    return -c.gravity * (np.sin(TH) * c.mu) @ c.T


def thrust_map_batch(Q, p: ModelParams) -> np.ndarray:
    """``B_F(q)`` for each row of ``Q`` -> (m, N)."""
    c = p.consts
    TH = np.atleast_2d(Q) @ c.T.T
    ang = TH + c.phi_mount
    # dp_mount/dq = sum_j K_j u'(th_j + phi_j) T_j
    jx = (np.cos(ang) * c.K_mount) @ c.T
    jy = (-np.sin(ang) * c.K_mount) @ c.T
    tang = p.thruster_angle_theta - (TH[:, TORSO] if p.thrust_body_fixed else 0.0)
    tang = np.broadcast_to(tang, (TH.shape[0],))
    return jx * np.cos(tang)[:, None] + jy * np.sin(tang)[:, None]
