"""Full-order hybrid simulation: impact map, relabeling, thruster dynamics, limit cycles."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateImpactError
from .model import N_DOF, ModelParams, unpinned_dynamics

log = logging.getLogger(__name__)

# stance <-> swing exchange in (q1, q2, q3) coordinates
RELABEL = np.array([[0.0, -1.0, 0.0], [-1.0, 0.0, 0.0], [1.0, 1.0, 1.0]])


def impact_map(q_minus, qdot_minus, p: ModelParams, return_full: bool = False):
    """Rigid plastic impact at the swing foot (no rebound, no slip).

    Solves ``[D_u -E2'; E2 0] [qdot_u+; F2] = [D_u qdot_u-; 0]`` with the
    stance foot at rest before impact.  Returns the post-impact pinned
    velocity (before relabeling) and the impulse ``F2`` at the swing foot.
    With ``return_full`` the unpinned post-impact velocity is returned too.
    """
    q_minus = np.asarray(q_minus, dtype=float)
    n = q_minus.size
    qu = np.concatenate([q_minus, [0.0, 0.0]])
    qdu = np.concatenate([np.asarray(qdot_minus, dtype=float), [0.0, 0.0]])
    U = unpinned_dynamics(qu, np.zeros(n + 2), p)
    Du, E2 = U.D_u, U.E_2
    K = np.block([[Du, -E2.T], [E2, np.zeros((2, 2))]])
    rhs = np.concatenate([Du @ qdu, np.zeros(2)])
    if np.linalg.cond(E2 @ np.linalg.solve(Du, E2.T)) > 1e12:
        raise DegenerateImpactError("E2 D_u^-1 E2' is singular")
    sol = np.linalg.solve(K, rhs)
    qdot_plus_u = sol[: n + 2]
    F2 = sol[n + 2:]
    if return_full:
        return qdot_plus_u[:n], F2, qdot_plus_u
    return qdot_plus_u[:n], F2


def impact_force_matrix(q_minus, p: ModelParams) -> np.ndarray:
    """``Delta_F2(q) = -(E2 D_u^-1 E2')^-1 E2 [I_N; 0]`` so that ``F2 = Delta_F2 qdot-``."""
    q_minus = np.asarray(q_minus, dtype=float)
    n = q_minus.size
    U = unpinned_dynamics(np.concatenate([q_minus, [0.0, 0.0]]), np.zeros(n + 2), p)
    Du, E2 = U.D_u, U.E_2
    W = E2 @ np.linalg.solve(Du, E2.T)
    return -np.linalg.solve(W, E2[:, :n])


def relabel(q, qdot):
    """Swap stance and swing legs; an involution."""
    return RELABEL @ np.asarray(q, dtype=float), RELABEL @ np.asarray(qdot, dtype=float)


# -- thruster dynamics ---------------------------------------------------------

@dataclass(frozen=True)
class ThrusterLinModel:
    """Second-order linear thruster ``F'' = w^2 (F_ss - F) - 2 z w F'``."""

    natural_frequency: float
    damping_ratio: float = 0.9
    steady_state: float = 0.0

    def __post_init__(self):
        if not self.natural_frequency > 0:
            raise ValueError("natural_frequency must be positive")
        if not self.damping_ratio > 0:
            raise ValueError("damping_ratio must be positive (contractive thruster)")

    @classmethod
    def preset(cls, name: str, step_time: float, steady_state: float = 0.0,
               damping_ratio: float = 0.9) -> "ThrusterLinModel":
        """``slow``: 2% settling in about 3 steps; ``fast``: in 0.1 step."""
        factor = {"slow": 3.0, "fast": 0.1}.get(name)
        if factor is None:
            raise ValueError(f"unknown thruster preset {name!r}")
        wn = 4.0 / (damping_ratio * factor * step_time)
        return cls(wn, damping_ratio, steady_state)

    def with_setpoint(self, F_ss: float) -> "ThrusterLinModel":
        return ThrusterLinModel(self.natural_frequency, self.damping_ratio, F_ss)

    def derivative(self, state):
        F, Fd = state
        w, z = self.natural_frequency, self.damping_ratio
        return np.array([Fd, w * w * (self.steady_state - F) - 2.0 * z * w * Fd])

    def response(self, t, state0=(0.0, 0.0)):
        """Exact ``(F, F')`` at times ``t`` from ``state0`` (matrix exponential)."""
        from scipy.linalg import expm

        w, z = self.natural_frequency, self.damping_ratio
        Acl = np.array([[0.0, 1.0], [-w * w, -2.0 * z * w]])
        e0 = np.asarray(state0, dtype=float) - [self.steady_state, 0.0]
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.array([expm(Acl * ti) @ e0 for ti in t]) + [self.steady_state, 0.0]
        return out


# -- thrust sources -------------------------------------------------------------

class ConstantThrust:
    """Constant physical thrust, or constant channel value when ``channel=True``."""

    n_states = 0

    def __init__(self, value: float, channel: bool = False):
        self.value = float(value)
        self.channel = bool(channel)

    def breakpoints(self, g):
        return ()

    def command(self, alpha, thr_state):
        return (None, self.value) if self.channel else (self.value, None)

    def derivative(self, thr_state):
        return np.zeros(0)


class ScheduleThrust:
    """Piecewise-constant thrust in the phase variable (see :class:`ThrusterSchedule`)."""

    n_states = 0

    def __init__(self, schedule):
        self.schedule = schedule

    def breakpoints(self, g):
        return tuple(self.schedule.breakpoints[1:-1])

    def command(self, alpha, thr_state):
        val = self.schedule.value_at(alpha)
        return (val, None) if self.schedule.physical else (None, val)

    def derivative(self, thr_state):
        return np.zeros(0)


class SecondOrderThrust:
    """Physical thrust produced by a :class:`ThrusterLinModel` (state carried across steps)."""

    n_states = 2

    def __init__(self, model: ThrusterLinModel):
        self.model = model

    def breakpoints(self, g):
        return ()

    def command(self, alpha, thr_state):
        return float(thr_state[0]), None

    def derivative(self, thr_state):
        return self.model.derivative(thr_state)


def make_thrust_source(source):
    """Accept a number (constant physical thrust), a schedule, a thruster model or a source."""
    from .zerodyn import ThrusterSchedule

    if source is None:
        return ConstantThrust(0.0)
    if isinstance(source, (int, float)):
        return ConstantThrust(float(source))
    if isinstance(source, ThrusterSchedule):
        return ScheduleThrust(source)
    if isinstance(source, ThrusterLinModel):
        return SecondOrderThrust(source)
    return source


# -- step simulation -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class HybridState:
    q: np.ndarray
    qdot: np.ndarray
    F_T_state: tuple[float, float] | None = None
    step_index: int = 0
    t: float = 0.0

    def __post_init__(self):
        q = np.array(self.q, dtype=float)
        qd = np.array(self.qdot, dtype=float)
        if not (np.isfinite(q).all() and np.isfinite(qd).all()):
            from .errors import InvalidStateError
            raise InvalidStateError("hybrid state must be finite")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "qdot", qd)

    def vector(self) -> np.ndarray:
        return np.concatenate([self.q, self.qdot])


@dataclass(frozen=True, eq=False)
class StepResult:
    t: np.ndarray
    q: np.ndarray
    qdot: np.ndarray
    u: np.ndarray
    F_T: np.ndarray
    y: np.ndarray
    ydot: np.ndarray
    alpha: np.ndarray
    sigma: np.ndarray
    zeta: np.ndarray
    termination: str  # impact | step-failure | divergence
    impact: dict | None = None
    next_state: HybridState | None = None
    thruster_state: np.ndarray | None = None  # (F, F') samples for second-order sources

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0])

    def raise_for_termination(self) -> None:
        from .errors import DivergenceError, StepFailure

        if self.termination == "step-failure":
            raise StepFailure("phase velocity reached zero before impact",
                              alpha=float(self.alpha[-1]))
        if self.termination == "divergence":
            raise DivergenceError("state left the admissible bound during the step")


RTOL = 1e-10
ATOL = 1e-10
STATE_BOUND = 1e3
IMPACT_GUARD = 0.75  # normalized phase after which touchdown is accepted
NOISE_FLOOR = 1e-6  # relative return-map residual attainable with event-split steps


def simulate_step(x0: HybridState, thrust_source, g, k, p: ModelParams,
                  max_time: float = 5.0, rtol: float = RTOL, atol: float = ATOL) -> StepResult:
    """Integrate one closed-loop step up to touchdown, then apply impact and relabeling.

    Explicit Runge-Kutta 5(4) with dense output; touchdown is the descending
    zero of the swing-foot height once the phase is past ``IMPACT_GUARD``,
    located by root finding on the dense output.  Schedule breakpoints are
    handled as events so the right-hand side is smooth on each piece.
    """
    from scipy.integrate import solve_ivp

    from .control import closed_loop
    from .model import swing_foot_height

    src = make_thrust_source(thrust_source)
    n = x0.q.size
    ns = src.n_states
    if ns:
        thr0 = np.asarray(x0.F_T_state if x0.F_T_state is not None else (0.0, 0.0), dtype=float)
    else:
        thr0 = np.zeros(0)
    c = g.c
    alpha_guard = g.alpha_i + IMPACT_GUARD * g.span
    direction = 1.0 if g.span > 0 else -1.0

    def thrust_args(alpha, z):
        F, chan = src.command(alpha, z[2 * n:])
        return (0.0 if F is None else F), chan

    def rhs(t, z):
        q, qd = z[:n], z[n:2 * n]
        alpha = float(c @ q)
        F, chan = thrust_args(alpha, z)
        qdd, _, _, _ = closed_loop(q, qd, F, g, k, p, channel=chan)
        return np.concatenate([qd, qdd, src.derivative(z[2 * n:])])

    def touchdown(t, z):
        q = z[:n]
        past = (float(c @ q) - alpha_guard) * direction
        return swing_foot_height(q, p) + (0.0 if past >= 0 else -past)
    touchdown.terminal = True
    touchdown.direction = -1

    def stalled(t, z):
        return float(c @ z[n:2 * n]) * direction
    stalled.terminal = True
    stalled.direction = -1

    def blowup(t, z):
        return STATE_BOUND - float(np.max(np.abs(z[:2 * n])))
    blowup.terminal = True
    blowup.direction = -1

    bps = sorted(src.breakpoints(g), key=lambda a: a * direction)
    events_base = [touchdown, stalled, blowup]
    z = np.concatenate([x0.q, x0.qdot, thr0])
    t0 = x0.t
    ts, zs = [np.array([t0])], [z[:, None]]
    termination = None
    t_end = t0 + max_time
    while termination is None:
        alpha_now = float(c @ z[:n])
        pending = [a for a in bps if (a - alpha_now) * direction > 1e-14]
        events = list(events_base)
        if pending:
            a_next = pending[0]

            def crossing(t, z, a_next=a_next):
                return (float(c @ z[:n]) - a_next) * direction
            crossing.terminal = True
            crossing.direction = 1
            events.append(crossing)
        sol = solve_ivp(rhs, (t0, t_end), z, method="RK45", rtol=rtol, atol=atol, events=events)
        ts.append(sol.t[1:])
        zs.append(sol.y[:, 1:])
        z = sol.y[:, -1].copy()
        t0 = float(sol.t[-1])
        if sol.status == 1:
            fired = [i for i, te in enumerate(sol.t_events) if te.size]
            i = fired[0]
            z = sol.y_events[i][0].copy()
            t0 = float(sol.t_events[i][0])
            ts[-1][-1] = t0
            zs[-1][:, -1] = z
            if i == 0:
                termination = "impact"
            elif i == 1:
                termination = "step-failure"
            elif i == 2:
                termination = "divergence"
            else:
                # nudge past the breakpoint so the next piece starts in the new segment
                continue
        elif sol.status == 0:
            termination = "divergence"
        else:
            termination = "divergence"
    T = np.concatenate(ts)
    Z = np.concatenate(zs, axis=1)
    # drop duplicated samples at segment joins
    keep = np.concatenate([[True], np.diff(T) > 0])
    T, Z = T[keep], Z[:, keep]
    return _finish_step(T, Z, termination, x0, src, g, k, p)


def _finish_step(T, Z, termination, x0, src, g, k, p) -> StepResult:
    from .control import closed_loop
    from .gait import output
    from .model import angular_momentum

    n = x0.q.size
    Q, QD = Z[:n].T, Z[n:2 * n].T
    m = T.size
    U = np.empty((m, n - 1))
    F = np.empty(m)
    Y = np.empty((m, n - 1))
    YD = np.empty((m, n - 1))
    sig = np.empty(m)
    for j in range(m):
        alpha = float(g.c @ Q[j])
        Fj, chan = src.command(alpha, Z[2 * n:, j])
        _, U[j], _, F[j] = closed_loop(Q[j], QD[j], 0.0 if Fj is None else Fj, g, k, p, channel=chan)
        Y[j], YD[j] = output(Q[j], QD[j], g)
        sig[j] = angular_momentum(Q[j], QD[j], p)
    alpha = Q @ g.c
    impact = None
    nxt = None
    thr = Z[2 * n:].T if src.n_states else None
    if termination == "impact":
        qm, qdm = Q[-1], QD[-1]
        qdp, F2 = impact_map(qm, qdm, p)
        qp, qdp = relabel(qm, qdp)
        impact = {"t": float(T[-1]), "q_minus": qm.tolist(), "qdot_minus": qdm.tolist(),
                  "q_plus": qp.tolist(), "qdot_plus": qdp.tolist(), "F2": F2.tolist(),
                  "step_index": x0.step_index}
        thr_next = tuple(float(v) for v in Z[2 * n:, -1]) if src.n_states else None
        nxt = HybridState(qp, qdp, thr_next, x0.step_index + 1, float(T[-1]))
    return StepResult(t=T, q=Q, qdot=QD, u=U, F_T=F, y=Y, ydot=YD, alpha=alpha, sigma=sig,
                      zeta=0.5 * sig**2, termination=termination, impact=impact,
                      next_state=nxt, thruster_state=thr)


def simulate_gait(x0: HybridState, thrust_source, g, k, p: ModelParams, steps: int,
                  **kw) -> list[StepResult]:
    """Consecutive steps; raises on the first step that does not end in an impact."""
    src = make_thrust_source(thrust_source)
    out = []
    x = x0
    for _ in range(steps):
        r = simulate_step(x, src, g, k, p, **kw)
        r.raise_for_termination()
        out.append(r)
        x = r.next_state
    return out


def on_manifold_state(alpha, sigma, g, p: ModelParams, F_T_state=None, t: float = 0.0,
                      step_index: int = 0) -> HybridState:
    """State on the zero-dynamics manifold at phase ``alpha`` with momentum ``sigma``."""
    from .gait import manifold_configuration
    from .model import pinned_dynamics

    q, dq, _ = manifold_configuration(alpha, g)
    D = pinned_dynamics(q, dq, p).D
    alpha_dot = sigma / float(D[-1] @ dq)
    return HybridState(q, dq * alpha_dot, F_T_state, step_index, t)


def _steady_source(src):
    if isinstance(src, SecondOrderThrust):
        return ConstantThrust(src.model.steady_state)
    return src


def _restricted_guess(src, g, p: ModelParams, funcs=None):
    from .zerodyn import ThrusterSchedule, build_zero_dynamics, fixed_point

    funcs = funcs or build_zero_dynamics(g, p)
    if isinstance(src, ConstantThrust):
        sched = ThrusterSchedule.constant(src.value, g, physical=not src.channel)
    elif isinstance(src, ScheduleThrust):
        sched = src.schedule
    else:
        sched = None
    fp = fixed_point(sched, funcs)
    sigma_plus = math.sqrt(2.0 * fp.zeta_star) * funcs.delta_zd
    return on_manifold_state(g.alpha_i, sigma_plus, g, p), fp


def step_map(x: np.ndarray, src, g, k, p: ModelParams) -> np.ndarray:
    """Post-impact to post-impact return map on ``(q, qdot)``."""
    n = x.size // 2
    r = simulate_step(HybridState(x[:n], x[n:]), src, g, k, p)
    r.raise_for_termination()
    return r.next_state.vector()


def find_limit_cycle(thrust_source, g, k, p: ModelParams, x_guess=None, tol: float = 1e-9,
                     max_iter: int = 12, fd_step: float = 1e-6):
    """Fixed point of the full-order step-to-step map by damped Newton iteration.

    The Jacobian is a forward-difference approximation.  Second-order
    thrusters are evaluated at their steady state.  Returns a
    :class:`~thrusthzd.zerodyn.LimitCycle` sampled from the periodic step.
    """
    from .errors import HZDError, NoLimitCycleError
    from .zerodyn import LimitCycle

    src = _steady_source(make_thrust_source(thrust_source))
    if x_guess is None:
        x = _restricted_guess(src, g, p)[0].vector()
    else:
        x = np.asarray(x_guess.vector() if isinstance(x_guess, HybridState) else x_guess, dtype=float)
    P = step_map(x, src, g, k, p)
    res = P - x
    it = 0
    while np.linalg.norm(res) > tol * max(1.0, np.linalg.norm(x)):
        if it >= max_iter:
            raise NoLimitCycleError(f"Newton did not converge (residual {np.linalg.norm(res):.3g})")
        J = np.empty((x.size, x.size))
        for i in range(x.size):
            dx = np.zeros(x.size)
            dx[i] = fd_step * max(1.0, abs(x[i]))
            J[:, i] = (step_map(x + dx, src, g, k, p) - P) / dx[i]
        step = np.linalg.lstsq(J - np.eye(x.size), -res, rcond=None)[0]
        lam = 1.0
        while True:
            try:
                x_new = x + lam * step
                P_new = step_map(x_new, src, g, k, p)
                if np.linalg.norm(P_new - x_new) < np.linalg.norm(res):
                    break
            except HZDError:
                pass
            lam *= 0.5
            if lam < 1e-3:
                break
        if lam < 1e-3:
            # no further decrease: accept if we sit at the integrator's noise floor
            if np.linalg.norm(res) <= NOISE_FLOOR * max(1.0, np.linalg.norm(x)):
                break
            raise NoLimitCycleError("line search failed")
        x, P, res = x_new, P_new, P_new - x_new
        it += 1
    n = x.size // 2
    r = simulate_step(HybridState(x[:n], x[n:]), src, g, k, p)
    alpha_dot = r.qdot @ g.c
    return LimitCycle(alpha=r.alpha, alpha_dot=alpha_dot, zeta=r.zeta, sigma=r.sigma,
                      t=r.t - r.t[0], zeta_star=float(r.zeta[-1]), x_plus=x, steps=it)
