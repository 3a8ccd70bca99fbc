"""Gait-timing variable, Bezier virtual constraints and the nominal-gait designer."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import ConfigError
from .kernels import bezier
from .model import N_DOF

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class GaitParams:
    c: np.ndarray  # (N,)
    A: np.ndarray  # (N-1, M+1)
    alpha_i: float
    alpha_f: float

    def __post_init__(self):
        c = np.array(self.c, dtype=float).reshape(-1)
        A = np.array(self.A, dtype=float)
        if A.ndim != 2 or A.shape[0] != c.size - 1:
            raise ConfigError(f"A must have shape ({c.size - 1}, M+1), got {A.shape}")
        if A.shape[1] < 4:
            raise ConfigError("Bezier order M must be >= 3")
        if not np.isfinite(A).all() or not np.isfinite(c).all():
            raise ConfigError("gait parameters must be finite")
        if self.alpha_i == self.alpha_f:
            raise ConfigError("alpha_i and alpha_f must differ")
        if c[-1] == 0.0:
            raise ConfigError("c must weight the unactuated coordinate (H invertible)")
        c.setflags(write=False)
        A.setflags(write=False)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "alpha_i", float(self.alpha_i))
        object.__setattr__(self, "alpha_f", float(self.alpha_f))

    @property
    def bezier_order_M(self) -> int:
        return self.A.shape[1] - 1

    @property
    def span(self) -> float:
        return self.alpha_f - self.alpha_i

    @property
    def H(self) -> np.ndarray:
        n = self.c.size
        return np.vstack([np.eye(n - 1, n), self.c])

    @property
    def H_inv(self) -> np.ndarray:
        return np.linalg.inv(self.H)

    def to_dict(self) -> dict:
        return {
            "c": self.c.tolist(),
            "A": self.A.tolist(),
            "alpha_i": self.alpha_i,
            "alpha_f": self.alpha_f,
            "bezier_order_M": self.bezier_order_M,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GaitParams":
        g = cls(c=d["c"], A=d["A"], alpha_i=d["alpha_i"], alpha_f=d["alpha_f"])
        if "bezier_order_M" in d and int(d["bezier_order_M"]) != g.bezier_order_M:
            raise ConfigError("bezier_order_M disagrees with the shape of A")
        return g

    def save(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "GaitParams":
        return cls.from_dict(json.loads(Path(path).read_text()))


def nominal_gait() -> GaitParams:
    """The shipped fixture gait (``gaits/nominal.json``)."""
    text = resources.files("thrusthzd").joinpath("gaits/nominal.json").read_text()
    return GaitParams.from_dict(json.loads(text))


def timing_variable(q, g: GaitParams):
    """Phase ``alpha = c q`` and the normalized phase ``s`` clamped to [0, 1]."""
    alpha = float(g.c @ np.asarray(q, dtype=float))
    s = (alpha - g.alpha_i) / g.span
    return alpha, min(max(s, 0.0), 1.0)


class BezierEval(NamedTuple):
    h: np.ndarray
    dh: np.ndarray  # d h / d alpha
    ddh: np.ndarray  # d^2 h / d alpha^2
    clamped: bool


def bezier_eval(A, s: float, span: float = 1.0, clamp: bool = True) -> BezierEval:
    """Bernstein-form evaluation; derivatives are taken w.r.t. alpha (``ds/dalpha = 1/span``).

    With ``clamp`` the phase is clipped to [0, 1] and the event reported in
    ``clamped``; without it the polynomial is extended smoothly.
    """
    clamped = False
    if clamp and not 0.0 <= s <= 1.0:
        s = min(max(s, 0.0), 1.0)
        clamped = True
    h, dh, ddh = bezier(A, s)
    return BezierEval(h, dh / span, ddh / span**2, clamped)


def desired_outputs(alpha, g: GaitParams, clamp: bool = False) -> BezierEval:
    return bezier_eval(g.A, (alpha - g.alpha_i) / g.span, g.span, clamp=clamp)


def output(q, qdot, g: GaitParams):
    """Virtual-constraint output ``y = q_b - h_d(alpha)`` and its time derivative."""
    q = np.asarray(q, dtype=float)
    qdot = np.asarray(qdot, dtype=float)
    alpha = float(g.c @ q)
    alpha_dot = float(g.c @ qdot)
    b = desired_outputs(alpha, g)
    return q[:-1] - b.h, qdot[:-1] - b.dh * alpha_dot


def manifold_configuration(alpha, g: GaitParams):
    """On-manifold ``q(alpha)`` with ``dq/dalpha`` and ``d^2q/dalpha^2``."""
    b = desired_outputs(alpha, g)
    Hi = g.H_inv
    q = Hi @ np.append(b.h, alpha)
    dq = Hi @ np.append(b.dh, 1.0)
    ddq = Hi @ np.append(b.ddh, 0.0)
    return q, dq, ddq


def manifold_configuration_batch(alphas, g: GaitParams):
    """Vectorized :func:`manifold_configuration` over a grid of phases."""
    alphas = np.atleast_1d(np.asarray(alphas, dtype=float))
    s = (alphas - g.alpha_i) / g.span
    A = g.A
    M = A.shape[1] - 1
    from math import comb

    def basis(order, s):
        k = np.arange(order + 1)
        return np.array([comb(order, j) for j in k]) * s[:, None] ** k * (1 - s[:, None]) ** (order - k)

    h = basis(M, s) @ A.T
    dh = M * basis(M - 1, s) @ np.diff(A, axis=1).T / g.span
    ddh = M * (M - 1) * basis(M - 2, s) @ np.diff(A, n=2, axis=1).T / g.span**2
    Hi = g.H_inv
    m = alphas.size
    Q = np.hstack([h, alphas[:, None]]) @ Hi.T
    dQ = np.hstack([dh, np.ones((m, 1))]) @ Hi.T
    ddQ = np.hstack([ddh, np.zeros((m, 1))]) @ Hi.T
    return Q, dQ, ddQ


def default_timing_vector(n: int = N_DOF) -> np.ndarray:
    c = np.zeros(n)
    c[-1] = 1.0
    return c


# -- nominal gait designer ------------------------------------------------------

@dataclass(frozen=True)
class DesignSpec:
    step_length: float = 0.4  # m
    speed: float = 1.8  # m/s
    bezier_order: int = 6
    torso_lean: float = 0.55  # rad, initial guess for the absolute torso angle
    swing_bump: float = 0.05  # rad, initial guess for swing-leg lag/lead
    clearance: float = 0.0005  # m, required swing-foot height at quarter phases
    min_zeta_ratio: float = 0.1  # min zeta(alpha) / zeta* along the step
    friction_margin: float = 0.8  # impact force ratio must stay below this fraction of mu
    bN_margin: float = 0.05  # m, b_N <= -margin keeps the thrust channel sign-definite
    kappa_margin: float = 0.5  # min |1/kappa1| relative to the initial guess
    max_deviation: float = 0.5  # rad, box around the initial guess for every free coefficient
    smoothness: float = 1.0  # weight on second differences of the Bezier coefficients
    max_nfev: int = 200
    restarts: int = 3
    grid_points: int = 201

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d: dict) -> "DesignSpec":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown design fields: {sorted(unknown)}")
        return cls(**d)


class _Designer:
    """Hybrid-invariant parametrization for the stance-angle phase ``c = [0, ..., 0, 1]``.

    Free variables: the final torso-relative angle ``a_{1,M}``, the
    penultimate column ``a_{:,M-1}`` and the interior columns ``a_{:,2..M-2}``.
    Column 0 follows from the relabeled final configuration and column 1 from
    the post-impact velocity direction, so the impact lands exactly on the
    manifold.
    """

    def __init__(self, p, spec: DesignSpec):
        self.p = p
        self.spec = spec
        self.M = spec.bezier_order
        self.alpha_f = float(np.arcsin(spec.step_length / (2.0 * p.leg_length)))
        self.alpha_i = -self.alpha_f
        self.c = default_timing_vector()
        self.alphas = np.linspace(self.alpha_i, self.alpha_f, spec.grid_points)

    def initial_guess(self) -> np.ndarray:
        s = np.linspace(0.0, 1.0, self.M + 1)
        al = self.alpha_i + s * (self.alpha_f - self.alpha_i)
        psi = self.spec.torso_lean
        th2 = -al + self.spec.swing_bump * np.sin(2 * np.pi * s)
        A = np.vstack([psi - al, th2 - psi])
        return np.concatenate([[A[0, -1]], A[:, -2], A[:, 2:-2].ravel()])

    def assemble(self, x) -> GaitParams:
        from .hybrid import impact_map, relabel
        from .model import pinned_dynamics

        M, af = self.M, self.alpha_f
        A = np.zeros((2, M + 1))
        A[:, M] = [x[0], -2.0 * af - x[0]]
        A[:, 0] = [-A[1, M], -A[0, M]]
        A[:, M - 1] = x[1:3]
        A[:, 2:M - 1] = np.reshape(x[3:], (2, M - 3))
        A[:, 1] = A[:, 0]
        g = GaitParams(self.c, A, self.alpha_i, af)
        qf, dqf, _ = manifold_configuration(af, g)
        qdot_plus, _ = impact_map(qf, dqf, self.p)
        _, qdot_plus = relabel(qf, qdot_plus)
        slope = qdot_plus[:-1] / (self.c @ qdot_plus)
        A[:, 1] = A[:, 0] + slope * g.span / M
        return GaitParams(self.c, A, self.alpha_i, af)

    def evaluate(self, g: GaitParams) -> dict:
        """Scalar design metrics of a gait (all hard conditions are read from here)."""
        from .hybrid import impact_map
        from .model import swing_foot_height, thrust_map_batch
        from .zerodyn import build_zero_dynamics, phase_integrals

        p, al = self.p, self.alphas
        Q, dQ, _ = manifold_configuration_batch(al, g)
        out = {}
        try:
            zd = build_zero_dynamics(g, p, grid_points=al.size)
        except Exception as exc:  # kappa1 sign change
            return {"error": str(exc)}
        inv_k1 = zd.inv_kappa1_grid
        out["inv_kappa1_min"] = float(np.min(inv_k1 * np.sign(inv_k1[0])))
        I, _, _ = phase_integrals(al, zd)
        d2 = zd.delta_zd**2
        out["delta"] = zd.delta_zd
        out["I0"] = float(I[-1])
        zstar = I[-1] / (1.0 - d2) if d2 < 1 else -1.0
        out["zeta_star"] = float(zstar)
        zeta = d2 * zstar + I
        out["zeta_min_ratio"] = float(zeta.min() / zstar) if zstar > 0 else -1.0
        if zstar > 0 and zeta.min() > 0:
            dt = 1.0 / (np.abs(1.0 / inv_k1) * np.sqrt(2.0 * zeta))
            out["step_time"] = float(np.trapezoid(dt, al))
        else:
            out["step_time"] = float("inf")
        out["height"] = np.array([swing_foot_height(q, p) for q in Q])
        # descending swing foot at impact: d height / d alpha < 0
        out["impact_height_slope"] = float((out["height"][-1] - out["height"][-2]) / (al[-1] - al[-2]))
        qf, dqf, _ = manifold_configuration(g.alpha_f, g)
        _, F2 = impact_map(qf, dqf / float(dqf[-1]) if dqf[-1] else dqf, p)
        if F2[1] < 0:  # sign of sigma- is positive on a forward step
            F2 = -F2
        out["impact_F2"] = F2
        out["impact_ratio"] = float(abs(F2[0]) / F2[1]) if F2[1] > 0 else float("inf")
        out["bN_max"] = float(thrust_map_batch(Q, p)[:, -1].max())
        return out

    def residuals(self, x, x0) -> np.ndarray:
        sp, p = self.spec, self.p
        try:
            g = self.assemble(x)
            m = self.evaluate(g)
        except Exception:
            return np.full(self._nres, 1e3)
        if "error" in m or not np.isfinite(m["step_time"]):
            r = np.full(self._nres, 1e2)
            if "error" not in m:
                r[0] = 1e2 - min(m["zeta_min_ratio"], 0.0)
            return r
        T_target = sp.step_length / sp.speed
        r = [10.0 * (m["step_time"] - T_target) / T_target]
        r.append(10.0 * max(0.0, sp.min_zeta_ratio - m["zeta_min_ratio"]))
        r.append(10.0 * max(0.0, m["impact_ratio"] - sp.friction_margin * p.friction_mu))
        s = np.linspace(0.0, 1.0, self.alphas.size)
        need = sp.clearance * np.abs(np.sin(2 * np.pi * s))
        r.extend(10.0 * np.maximum(0.0, need - m["height"])[::10] / sp.clearance)
        r.append(10.0 * max(0.0, m["impact_height_slope"] + 0.05))
        r.append(10.0 * max(0.0, m["bN_max"] + sp.bN_margin) / sp.bN_margin)
        r.append(10.0 * max(0.0, 1.0 - m["inv_kappa1_min"] / self._k1_ref))
        r.extend(0.3 * (x - x0))
        r.extend(sp.smoothness * np.diff(g.A, n=2, axis=1).ravel())
        return np.asarray(r)

    def hard_checks(self, g: GaitParams, m: dict) -> list[str]:
        sp, p = self.spec, self.p
        bad = []
        if "error" in m:
            return [m["error"]]
        if not m["zeta_star"] > 0:
            bad.append("no positive restricted fixed point")
        if not m["delta"] < 1:
            bad.append("impact does not dissipate momentum (delta >= 1)")
        if not m["zeta_min_ratio"] > 0:
            bad.append("zeta(alpha) reaches zero during the step")
        if not (m["impact_F2"][1] > 0 and m["impact_ratio"] < p.friction_mu):
            bad.append("impact force violates the friction cone")
        if not m["impact_height_slope"] < 0:
            bad.append("swing foot not descending at impact")
        return bad


def design_nominal_gait(p, spec: DesignSpec | None = None, seed: int = 0, **overrides) -> GaitParams:
    """Design a stable zero-thrust gait with hybrid invariance built in.

    Nonlinear least squares over the free Bezier coefficients; deterministic
    for a given ``seed`` (restarts perturb the initial guess with a seeded
    generator).  Raises :class:`GaitDesignError` naming the violated condition.
    """
    from scipy.optimize import least_squares

    from .errors import GaitDesignError

    spec = spec or DesignSpec()
    if overrides:
        spec = DesignSpec(**{**spec.to_dict(), **overrides})
    if not spec.step_length > 0:
        raise GaitDesignError("step length must be positive", condition="step_length")
    if not spec.step_length < 2.0 * p.leg_length:
        raise GaitDesignError("step length exceeds twice the leg length", condition="step_length")
    if not spec.speed > 0:
        raise GaitDesignError("average speed must be positive", condition="speed")
    if spec.bezier_order < 4:
        raise GaitDesignError("the designer needs Bezier order >= 4", condition="bezier_order")

    des = _Designer(p, spec)
    x0 = des.initial_guess()
    g0 = des.assemble(x0)
    m0 = des.evaluate(g0)
    if "error" in m0 or not np.isfinite(m0["step_time"]):
        raise GaitDesignError("initial guess does not cross the step", condition="initial_guess")
    des._k1_ref = spec.kappa_margin * m0["inv_kappa1_min"]
    des._nres = 0
    des._nres = des.residuals(x0, x0).size
    lb, ub = x0 - spec.max_deviation, x0 + spec.max_deviation
    rng = np.random.default_rng(seed)
    best = None
    for k in range(max(1, spec.restarts)):
        start = x0 if k == 0 else np.clip(x0 + rng.normal(scale=0.05, size=x0.size), lb, ub)
        sol = least_squares(des.residuals, start, args=(x0,), method="trf", bounds=(lb, ub),
                            max_nfev=spec.max_nfev, x_scale=0.1)
        if best is None or sol.cost < best.cost:
            best = sol
    g = des.assemble(best.x)
    m = des.evaluate(g)
    bad = des.hard_checks(g, m)
    if bad:
        raise GaitDesignError(bad[0], condition=bad[0])
    log.info("designed gait: step time %.3f s, zeta*=%.2f, delta=%.4f", m["step_time"],
             m["zeta_star"], m["delta"])
    return g

