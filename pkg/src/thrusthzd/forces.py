"""Ground reaction forces: impact impulses, swing-phase stance force, polynomial
surrogates and the thrust-schedule optimizer that keeps them admissible.

Sign conventions: forces act on the robot, ``+y`` is up.  ``F_r`` is the
total force the stance constraint must supply with the thrust lumped in
(``F_r = F_1 + B_Fu F_T``); ``F_1`` is the true ground force.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
from numpy.polynomial import Polynomial

from .control import Gains, closed_loop
from .errors import FitQualityError, NumericalSingularityError, OptimizationInfeasible
from .gait import GaitParams, manifold_configuration, manifold_configuration_batch
from .hybrid import impact_force_matrix, impact_map
from .model import ModelParams, N_DOF, thrust_direction, unpinned_dynamics
from .qp import solve_qp
from .zerodyn import (ThrusterSchedule, ZeroDynFuncs, build_zero_dynamics, phase_integrals,
                      segment_weights)

log = logging.getLogger(__name__)

H, V = 0, 1


# -- impact -----------------------------------------------------------------------

class ImpactForceCoeffs(NamedTuple):
    b_h: float  # horizontal impulse per unit sigma_N-
    b_v: float

    @property
    def ratio(self) -> float:
        return self.b_h / self.b_v if self.b_v != 0 else math.inf


def impact_force_coeffs(g: GaitParams, p: ModelParams) -> ImpactForceCoeffs:
    qf, dqf, _ = manifold_configuration(g.alpha_f, g)
    unpinned = unpinned_dynamics(np.concatenate([qf, [0.0, 0.0]]), np.zeros(N_DOF + 2), p)
    kappa1 = 1.0 / float(unpinned.D_u[N_DOF - 1, :N_DOF] @ dqf)
    b = impact_force_matrix(qf, p) @ dqf * kappa1
    return ImpactForceCoeffs(float(b[H]), float(b[V]))


def impact_force_restricted(sigma_minus: float, g: GaitParams, p: ModelParams) -> np.ndarray:
    """Impact impulse for an on-manifold pre-impact state with momentum ``sigma_minus``."""
    b = impact_force_coeffs(g, p)
    return np.array([b.b_h, b.b_v]) * sigma_minus


class ImpactFeasibility(NamedTuple):
    feasible: bool
    margin_v: float  # vertical impulse per unit sigma_N- (N s per kg m^2/s)
    margin_friction: float  # mu - |F_h / F_v|
    ratio: float


def impact_feasibility(g: GaitParams, p: ModelParams, mu: float | None = None) -> ImpactFeasibility:
    """Scale-free impact check: the verdict holds for every ``sigma_N- > 0``."""
    mu = p.friction_mu if mu is None else mu
    b = impact_force_coeffs(g, p)
    ratio = abs(b.b_h) / b.b_v if b.b_v > 0 else math.inf
    return ImpactFeasibility(bool(b.b_v > 0 and ratio < mu), b.b_v, mu - ratio, ratio)


# -- swing phase ------------------------------------------------------------------

def swing_force(q_u, q_u_dot, u, F_T: float, p: ModelParams):
    """Stance-foot force ``(F_r, F_1)`` needed to keep the stance foot still.

    ``F_r = -Dbar22^-1 [Dbar21 Dbar22] (B_1 [u; F_T] - Omega_u)`` where
    ``Dbar = D_u^-1``; then ``F_1 = F_r - B_Fu F_T``.
    """
    U = unpinned_dynamics(q_u, q_u_dot, p)
    Dbar = np.linalg.inv(U.D_u)
    D22 = Dbar[-2:, -2:]
    if np.linalg.cond(D22) > 1e12:
        raise NumericalSingularityError("Dbar22 is singular")
    rhs = U.B_1 @ np.append(np.asarray(u, dtype=float), F_T) - U.Omega_u
    F_r = -np.linalg.solve(D22, Dbar[-2:] @ rhs)
    return F_r, F_r - U.B_Fu * F_T


def _manifold_force(alpha, zeta_alpha, F_T, funcs: ZeroDynFuncs, k: Gains):
    """``F_r`` at an on-manifold state with ``zeta = zeta_alpha`` and thrust ``F_T``.

    The torque is the feedback-linearizing law with ``y = 0``, i.e. the feedforward part of
    the output controller; the result is affine in ``(zeta_alpha, F_T)``.
    """
    g, p = funcs.gait, funcs.params
    q, dq, _ = manifold_configuration(alpha, g)
    inv_k1 = float(unpinned_dynamics(np.concatenate([q, [0.0, 0.0]]), np.zeros(N_DOF + 2),
                                     p).D_u[N_DOF - 1, :N_DOF] @ dq)
    sigma = math.copysign(math.sqrt(2.0 * max(zeta_alpha, 0.0)), inv_k1 * funcs.direction)
    qdot = dq * sigma / inv_k1
    _, u, _, _ = closed_loop(q, qdot, F_T, g, k, p)
    zeros = np.zeros(2)
    F_r, _ = swing_force(np.concatenate([q, zeros]), np.concatenate([qdot, zeros]), u, F_T, p)
    return F_r


class LocalForceTerms(NamedTuple):
    """``F_r = P zeta_alpha + Q F_T + R`` at one phase."""

    P: np.ndarray
    Q: np.ndarray
    R: np.ndarray


def local_force_terms(alpha, funcs: ZeroDynFuncs, k: Gains) -> LocalForceTerms:
    R = _manifold_force(alpha, 0.0, 0.0, funcs, k)
    P = _manifold_force(alpha, 1.0, 0.0, funcs, k) - R
    Q = _manifold_force(alpha, 0.0, 1.0, funcs, k) - R
    return LocalForceTerms(P, Q, R)


class LambdaTerms(NamedTuple):
    Lambda0: np.ndarray
    Lambda1: np.ndarray
    Lambda2: np.ndarray


def lambda_terms(alpha, funcs: ZeroDynFuncs, k: Gains, local: LocalForceTerms | None = None,
                 integrals=None) -> LambdaTerms:
    """Coefficients with ``F_r = Lambda2 F_T + Lambda1 zeta* + Lambda0`` for constant thrust.

    Uses ``zeta(alpha) = delta^2 zeta* + I0(alpha) + Bphys(alpha) F_T``.
    """
    loc = local or local_force_terms(alpha, funcs, k)
    if integrals is None:
        I0, _, Bp = (v[0] for v in phase_integrals([alpha], funcs))
    else:
        I0, Bp = integrals
    d2 = funcs.delta_zd**2
    return LambdaTerms(loc.R + loc.P * I0, loc.P * d2, loc.Q + loc.P * Bp)


def swing_force_restricted(alpha, zeta_star, F_T, funcs: ZeroDynFuncs, k: Gains):
    """Restricted stance force under constant thrust and the exact Lambda coefficients."""
    lam = lambda_terms(alpha, funcs, k)
    F_r = lam.Lambda2 * F_T + lam.Lambda1 * zeta_star + lam.Lambda0
    return F_r, lam


# -- surrogates -------------------------------------------------------------------

_CHANNELS = ("Lambda0", "Lambda1", "Lambda2", "P", "Q", "R")
_SCALARS = ("I0", "B", "Bphys", "bN")


def _exact_tables(alphas, funcs: ZeroDynFuncs, k: Gains) -> dict:
    I0, B, Bp = phase_integrals(alphas, funcs)
    tab = {name: np.empty((alphas.size, 2)) for name in _CHANNELS}
    for j, a in enumerate(alphas):
        loc = local_force_terms(a, funcs, k)
        lam = lambda_terms(a, funcs, k, local=loc, integrals=(I0[j], Bp[j]))
        for name, val in zip(_CHANNELS, (*lam, *loc)):
            tab[name][j] = val
    tab["I0"], tab["B"], tab["Bphys"] = I0, B, Bp
    tab["bN"] = funcs.bN(alphas)
    return tab


@dataclass(frozen=True, eq=False)
class SwingForceFit:
    """Polynomial surrogates in the phase for the restricted stance force.

    ``L0, L1, L2`` are the constant-thrust coefficients (each a horizontal and a
    vertical polynomial).  ``P, Q, R`` are the local coefficients used for
    piecewise schedules, together with the phase integrals ``I0, B, Bphys``
    and the channel gain ``bN``.
    """

    degree: int
    domain: tuple[float, float]
    polys: dict  # name -> Polynomial or (Polynomial_h, Polynomial_v)
    delta_sq: float
    zeta_star_nominal: float
    impact_ratio: float
    impact_b_v: float
    b_Fu: tuple[float, float]
    max_fit_residual: float
    channel_residuals: dict
    zeta_ref: float
    F_ref: float

    @property
    def L0(self):
        return self.polys["Lambda0"]

    @property
    def L1(self):
        return self.polys["Lambda1"]

    @property
    def L2(self):
        return self.polys["Lambda2"]

    def eval(self, name, alpha) -> np.ndarray:
        pl = self.polys[name]
        if isinstance(pl, tuple):
            return np.stack([pl[0](alpha), pl[1](alpha)], axis=-1)
        return pl(alpha)

    def to_dict(self) -> dict:
        def enc(pl):
            return [pl.coef.tolist(), list(pl.domain)]

        return {
            "degree": self.degree,
            "domain": list(self.domain),
            "polys": {n: ([enc(pl[0]), enc(pl[1])] if isinstance(pl, tuple) else enc(pl))
                      for n, pl in self.polys.items()},
            "delta_sq": self.delta_sq,
            "zeta_star_nominal": self.zeta_star_nominal,
            "impact_ratio": self.impact_ratio,
            "impact_b_v": self.impact_b_v,
            "b_Fu": list(self.b_Fu),
            "max_fit_residual": self.max_fit_residual,
            "channel_residuals": self.channel_residuals,
            "zeta_ref": self.zeta_ref,
            "F_ref": self.F_ref,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SwingForceFit":
        def dec(x):
            return Polynomial(x[0], domain=x[1])

        polys = {}
        for n, v in d["polys"].items():
            polys[n] = (dec(v[0]), dec(v[1])) if n in _CHANNELS else dec(v)
        return cls(degree=int(d["degree"]), domain=tuple(d["domain"]), polys=polys,
                   delta_sq=float(d["delta_sq"]), zeta_star_nominal=float(d["zeta_star_nominal"]),
                   impact_ratio=float(d["impact_ratio"]), impact_b_v=float(d["impact_b_v"]),
                   b_Fu=tuple(d["b_Fu"]), max_fit_residual=float(d["max_fit_residual"]),
                   channel_residuals=dict(d["channel_residuals"]), zeta_ref=float(d["zeta_ref"]),
                   F_ref=float(d["F_ref"]))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "SwingForceFit":
        return cls.from_dict(json.loads(Path(path).read_text()))


def fit_force_polynomials(g: GaitParams, p: ModelParams, degree: int = 8, k: Gains | None = None,
                          funcs: ZeroDynFuncs | None = None, n_fit: int = 201, n_val: int = 997,
                          residual_bound: float = 0.5, F_ref: float = 50.0,
                          zeta_ref: float | None = None) -> SwingForceFit:
    """Least-squares polynomial fits of the restricted force coefficients.

    ``max_fit_residual`` is the worst surrogate force error (N) on an
    independent validation grid along the orbit with fixed point ``zeta_ref``
    (default: the nominal one) for any constant thrust ``|F_T| <= F_ref``.
    """
    if degree < 0:
        raise ValueError("degree must be non-negative")
    k = k or Gains.from_epsilon()
    funcs = funcs or build_zero_dynamics(g, p)
    zeta_ref = funcs.zeta_star_nominal if zeta_ref is None else zeta_ref
    dom = (g.alpha_i, g.alpha_f)
    # Chebyshev-Lobatto fit nodes avoid the endpoint error growth of uniform grids;
    # the validation grid is uniform and independent of them
    a_fit = 0.5 * (dom[0] + dom[1]) - 0.5 * (dom[1] - dom[0]) * np.cos(np.linspace(0, np.pi, n_fit))
    a_val = np.linspace(*dom, n_val)
    fit_tab = _exact_tables(a_fit, funcs, k)
    val_tab = _exact_tables(a_val, funcs, k)
    lo, hi = min(dom), max(dom)
    polys, resid = {}, {}
    for name in _CHANNELS + _SCALARS:
        y = fit_tab[name]
        if y.ndim == 2:
            pl = tuple(Polynomial.fit(a_fit, y[:, c], degree, domain=[lo, hi]) for c in range(2))
            err = np.abs(np.stack([pl[0](a_val), pl[1](a_val)], axis=-1) - val_tab[name])
        else:
            pl = Polynomial.fit(a_fit, y, degree, domain=[lo, hi])
            err = np.abs(pl(a_val) - val_tab[name])
        polys[name] = pl
        resid[name] = err
    # force-level residual (N): surrogate error at the nominal orbit for |F_T| <= F_ref
    def err_of(name):
        pl = polys[name]
        if isinstance(pl, tuple):
            return np.stack([pl[0](a_val), pl[1](a_val)], axis=-1) - val_tab[name]
        return pl(a_val) - val_tab[name]

    dL0, dL1, dL2 = err_of("Lambda0"), err_of("Lambda1"), err_of("Lambda2")
    base = dL0 + dL1 * zeta_ref
    lam_err = (np.abs(base) + np.abs(dL2) * F_ref).max()
    # local form: zeta(alpha) on the nominal orbit, errors of the phase integrals propagate via P
    zeta_nom = funcs.delta_zd**2 * zeta_ref + val_tab["I0"]
    dzeta = np.abs(err_of("I0")) + np.abs(err_of("Bphys")) * F_ref
    loc = err_of("R") + err_of("P") * zeta_nom[:, None]
    loc_err = (np.abs(loc) + np.abs(err_of("Q")) * F_ref
               + np.abs(val_tab["P"]) * dzeta[:, None]).max()
    max_res = float(max(lam_err, loc_err))
    channel = {n: float(r.max()) for n, r in resid.items()}
    imp = impact_force_coeffs(g, p)
    fit = SwingForceFit(
        degree=degree, domain=dom, polys=polys, delta_sq=funcs.delta_zd**2,
        zeta_star_nominal=funcs.zeta_star_nominal,
        impact_ratio=abs(imp.b_h) / imp.b_v if imp.b_v > 0 else math.inf, impact_b_v=imp.b_v,
        b_Fu=tuple(float(v) for v in thrust_direction(manifold_configuration(g.alpha_i, g)[0], p)),
        max_fit_residual=max_res, channel_residuals=channel, zeta_ref=float(zeta_ref),
        F_ref=float(F_ref))
    if max_res > residual_bound:
        raise FitQualityError(f"fit residual {max_res:.3g} N exceeds {residual_bound} N; "
                              f"try a degree above {degree}")
    return fit


# -- constraint evaluation ---------------------------------------------------------

@dataclass(frozen=True)
class ConstraintReport:
    feasible: bool
    min_vertical_margin: float  # N, min of the vertical ground force
    max_friction_ratio: float
    worst_alpha: float
    binding: str  # name of the most critical constraint
    impact_feasible: bool
    min_zeta: float

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _as_schedule(source, g: GaitParams) -> ThrusterSchedule:
    if isinstance(source, ThrusterSchedule):
        return source
    return ThrusterSchedule.constant(float(source), g, physical=True)


def _scan_grid(schedule: ThrusterSchedule, per_segment: int):
    bp = schedule.breakpoints
    alphas, seg = [], []
    for j in range(bp.size - 1):
        a = np.linspace(bp[j], bp[j + 1], per_segment)
        alphas.append(a)
        seg.append(np.full(a.size, j))
    return np.concatenate(alphas), np.concatenate(seg)


def _ground_force_affine(alphas, seg, schedule: ThrusterSchedule, zeta_star, tables, b_Fu, delta_sq):
    """Affine maps ``F_1 = A_h/v @ T + c_h/v`` and ``zeta = A_z @ T + c_z`` over the scan grid.

    ``tables`` provides P, Q, R (m x 2), I0, B, Bphys, bN (m) at ``alphas`` and
    the cumulative weights at the breakpoints.
    """
    m, nseg = alphas.size, schedule.values.size
    W = tables["Bphys"] if schedule.physical else tables["B"]
    Wb = tables["W_bp"]
    # zeta(alpha) = d2 zeta* + I0 + sum_{l<j} (Wb[l+1]-Wb[l]) T_l + (W - Wb[j]) T_j
    A_z = np.zeros((m, nseg))
    for l in range(nseg):
        done = seg > l
        A_z[done, l] = Wb[l + 1] - Wb[l]
        cur = seg == l
        A_z[cur, l] = W[cur] - Wb[l]
    c_z = delta_sq * zeta_star + tables["I0"]
    # physical thrust at each phase: T_j (physical) or T_j / b_N (channel)
    A_F = np.zeros((m, nseg))
    A_F[np.arange(m), seg] = 1.0 if schedule.physical else 1.0 / tables["bN"]
    P, Q, R = tables["P"], tables["Q"], tables["R"]
    out = {}
    for c, name in ((H, "h"), (V, "v")):
        A = P[:, c, None] * A_z + (Q[:, c] - b_Fu[c])[:, None] * A_F
        out[name] = (A, P[:, c] * c_z + R[:, c])
    out["z"] = (A_z, c_z)
    return out


def _fit_tables(alphas, schedule, fit: SwingForceFit):
    tab = {n: fit.eval(n, alphas) for n in ("P", "Q", "R", "I0", "B", "Bphys", "bN")}
    W = fit.polys["Bphys"] if schedule.physical else fit.polys["B"]
    Wb = W(schedule.breakpoints) - W(schedule.breakpoints[0])
    tab["B"] = tab["B"] - fit.polys["B"](schedule.breakpoints[0])
    tab["Bphys"] = tab["Bphys"] - fit.polys["Bphys"](schedule.breakpoints[0])
    tab["W_bp"] = Wb
    return tab


def _exact_scan_tables(alphas, schedule, funcs: ZeroDynFuncs, k: Gains):
    order = np.argsort((alphas - funcs.alpha_i) * funcs.direction, kind="stable")
    I0, B, Bp = phase_integrals(alphas[order], funcs)
    inv = np.empty_like(order)
    inv[order] = np.arange(order.size)
    tab = {"I0": I0[inv], "B": B[inv], "Bphys": Bp[inv], "bN": funcs.bN(alphas)}
    loc = [local_force_terms(a, funcs, k) for a in alphas]
    tab["P"] = np.array([l.P for l in loc])
    tab["Q"] = np.array([l.Q for l in loc])
    tab["R"] = np.array([l.R for l in loc])
    _, Bb, Bpb = phase_integrals(schedule.breakpoints, funcs)
    tab["W_bp"] = Bpb if schedule.physical else Bb
    return tab


def _report(aff, schedule, alphas, mu, impact_ok, margin=0.0) -> ConstraintReport:
    T = schedule.values
    Fh = aff["h"][0] @ T + aff["h"][1]
    Fv = aff["v"][0] @ T + aff["v"][1]
    z = aff["z"][0] @ T + aff["z"][1]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(Fv > 0, np.abs(Fh) / np.where(Fv > 0, Fv, 1.0), np.inf)
    iv = int(np.argmin(Fv))
    ir = int(np.argmax(ratio))
    vert_ok = Fv[iv] > margin
    fric_ok = bool(np.all(np.abs(Fh) + margin < mu * (Fv - margin)))
    zeta_ok = z.min() > 0
    feasible = bool(vert_ok and fric_ok and zeta_ok and impact_ok)
    if not zeta_ok:
        binding, worst = "zeta", alphas[int(np.argmin(z))]
    elif not vert_ok:
        binding, worst = "vertical_force", alphas[iv]
    elif not fric_ok:
        binding, worst = "friction", alphas[ir]
    elif not impact_ok:
        binding, worst = "impact_friction", schedule.breakpoints[-1]
    else:
        # closest to violation, measured in force units
        slack_v = Fv[iv]
        slack_f = float(np.min(mu * Fv - np.abs(Fh)))
        if slack_v <= slack_f:
            binding, worst = "vertical_force", alphas[iv]
        else:
            binding, worst = "friction", alphas[int(np.argmin(mu * Fv - np.abs(Fh)))]
    return ConstraintReport(feasible=feasible, min_vertical_margin=float(Fv[iv]),
                            max_friction_ratio=float(ratio[ir]), worst_alpha=float(worst),
                            binding=binding, impact_feasible=bool(impact_ok), min_zeta=float(z.min()))


def check_constraints(source, zeta_star: float, fit: SwingForceFit, mu: float | None,
                      p: ModelParams, g: GaitParams | None = None, per_segment: int = 201,
                      margin: float = 0.0) -> ConstraintReport:
    """Stance and impact force admissibility from the polynomial surrogates.

    ``source`` is a constant physical thrust or a :class:`ThrusterSchedule`.
    Each schedule segment is scanned on ``per_segment`` phases with its own
    value.  ``margin`` (N) tightens the force inequalities.
    """
    mu = p.friction_mu if mu is None else mu
    if isinstance(source, ThrusterSchedule):
        schedule = source
    else:
        a_i, a_f = fit.domain
        schedule = ThrusterSchedule([a_i, a_f], [float(source)], physical=True)
    alphas, seg = _scan_grid(schedule, per_segment)
    tab = _fit_tables(alphas, schedule, fit)
    aff = _ground_force_affine(alphas, seg, schedule, zeta_star, tab, fit.b_Fu, fit.delta_sq)
    return _report(aff, schedule, alphas, mu, fit.impact_ratio < mu and fit.impact_b_v > 0, margin)


def check_constraints_exact(source, zeta_star: float, funcs: ZeroDynFuncs, mu: float | None,
                            k: Gains | None = None, per_segment: int = 201) -> ConstraintReport:
    """Same verdict as :func:`check_constraints` from the exact force coefficients."""
    p, g = funcs.params, funcs.gait
    mu = p.friction_mu if mu is None else mu
    k = k or Gains.from_epsilon()
    schedule = _as_schedule(source, g)
    alphas, seg = _scan_grid(schedule, per_segment)
    tab = _exact_scan_tables(alphas, schedule, funcs, k)
    b_Fu = thrust_direction(manifold_configuration(g.alpha_i, g)[0], p)
    aff = _ground_force_affine(alphas, seg, schedule, zeta_star, tab, b_Fu, funcs.delta_zd**2)
    imp = impact_feasibility(g, p, mu)
    return _report(aff, schedule, alphas, mu, imp.feasible)


# -- schedule optimizer ------------------------------------------------------------

def optimize_schedule(shift: float, breakpoints, funcs: ZeroDynFuncs, fit: SwingForceFit,
                      mu: float | None, p: ModelParams, physical: bool = False,
                      per_segment: int = 201, safety: float = 2.0) -> ThrusterSchedule:
    """Least-effort schedule that moves the fixed point by ``shift`` with admissible forces.

    Minimizes ``sum T_j^2`` subject to ``sum_j w_j T_j = (1 - delta^2) shift``
    and, at every scanned phase of the shifted orbit, a positive vertical
    ground force, the friction cone and ``zeta > 0``.  Force inequalities are
    tightened by ``safety`` times the surrogate residual.
    """
    mu = p.friction_mu if mu is None else mu
    bp = np.asarray(breakpoints, dtype=float)
    probe = ThrusterSchedule(bp, np.zeros(bp.size - 1), physical=physical)
    probe.check_against(funcs)
    if not fit.impact_ratio < mu or not fit.impact_b_v > 0:
        raise OptimizationInfeasible("impact impulse violates the friction cone",
                                     binding="impact_friction")
    w = segment_weights(probe, funcs)
    if not np.any(w):
        raise OptimizationInfeasible("all segment weights vanish", binding="fixed_point")
    zeta_star = funcs.zeta_star_nominal + shift
    if zeta_star <= 0:
        raise OptimizationInfeasible("requested fixed point is not positive", binding="zeta")
    alphas, seg = _scan_grid(probe, per_segment)
    tab = _fit_tables(alphas, probe, fit)
    aff = _ground_force_affine(alphas, seg, probe, zeta_star, tab, fit.b_Fu, fit.delta_sq)
    tight = safety * fit.max_fit_residual
    Ah, ch = aff["h"]
    Av, cv = aff["v"]
    Az, cz = aff["z"]
    # G T <= h
    G = np.vstack([-Av, Ah - mu * Av, -Ah - mu * Av, -Az])
    h = np.concatenate([cv - tight, mu * cv - ch - (1 + mu) * tight,
                        mu * cv + ch - (1 + mu) * tight, cz - 1e-9 * abs(zeta_star)])
    names = (["vertical_force"] * len(alphas) + ["friction"] * (2 * len(alphas))
             + ["zeta"] * len(alphas))
    where = np.concatenate([alphas, alphas, alphas, alphas])
    target = (1.0 - funcs.delta_zd**2) * shift
    res = solve_qp(np.eye(w.size), np.zeros(w.size), G, h, w[None, :], np.array([target]))
    if not res.feasible:
        i = res.binding
        raise OptimizationInfeasible(
            f"no admissible schedule: {names[i]} constraint at alpha={where[i]:.4f}",
            binding=names[i])
    return ThrusterSchedule(bp, res.x, physical=physical)
