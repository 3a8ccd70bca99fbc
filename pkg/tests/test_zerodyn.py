import functools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from thrusthzd.errors import InfeasibleScheduleError, InvalidGaitError, StepFailure
from thrusthzd.gait import GaitParams, manifold_configuration, nominal_gait
from thrusthzd.hybrid import impact_map, relabel
from thrusthzd.model import ModelParams, gravity_vector, pinned_dynamics
from thrusthzd.zerodyn import (ThrusterSchedule, bF_integral, bF_physical_integral,
                               build_zero_dynamics, cancelling_breakpoints, fixed_point,
                               iterate_poincare, phase_integrals, restricted_impact,
                               restricted_limit_cycle, restricted_poincare, schedule_increment,
                               segment_weights, shape_schedule, zd_step, zeta_closed_form,
                               zeta_nominal, zeta_profile)


@functools.lru_cache(maxsize=1)
def _nominal_funcs():
    return build_zero_dynamics(nominal_gait(), ModelParams())


def _kappas(a, g, p):
    q, dq, _ = manifold_configuration(a, g)
    D = pinned_dynamics(q, dq, p).D
    return 1.0 / float(D[-1] @ dq), -float(gravity_vector(q, p)[-1]), float(
        pinned_dynamics(q, dq, p).B_F[-1])


def test_kappa_functions_match_direct_evaluation(funcs, g, p, rng):
    for a in rng.uniform(g.alpha_i, g.alpha_f, 10):
        k1, k2, bN = _kappas(a, g, p)
        assert funcs.kappa1(a) == pytest.approx(k1, rel=1e-12)
        assert funcs.kappa2(a) == pytest.approx(k2, rel=1e-12)
        assert funcs.bN(a) == pytest.approx(bN, rel=1e-12)


def test_phase_integrals_match_quadrature(funcs, g, p):
    al = np.linspace(g.alpha_i, g.alpha_f, 9)[1:]
    I0, B, Bp = phase_integrals(al, funcs)
    for j, a in enumerate(al):
        ref0 = integrate.quad(lambda x: _kappas(x, g, p)[1] / _kappas(x, g, p)[0], g.alpha_i, a,
                              epsabs=1e-10, epsrel=1e-12)[0]
        refB = integrate.quad(lambda x: 1 / _kappas(x, g, p)[0], g.alpha_i, a, epsabs=0, epsrel=1e-12)[0]
        refP = integrate.quad(lambda x: _kappas(x, g, p)[2] / _kappas(x, g, p)[0], g.alpha_i, a,
                              epsabs=0, epsrel=1e-12)[0]
        assert I0[j] == pytest.approx(ref0, rel=1e-11, abs=1e-9)
        assert B[j] == pytest.approx(refB, rel=1e-11, abs=1e-12)
        assert Bp[j] == pytest.approx(refP, rel=1e-11, abs=1e-12)
    assert I0[-1] == pytest.approx(funcs.nominal_integral, rel=1e-12)
    assert B[-1] == pytest.approx(bF_integral(g.alpha_f, g.alpha_i, funcs), rel=1e-12)
    assert Bp[-1] == pytest.approx(bF_physical_integral(g.alpha_f, g.alpha_i, funcs), rel=1e-12)


def test_restricted_impact_matches_full_impact(funcs, g, p):
    delta, dq_plus, q_plus = restricted_impact(g, p)
    qf, dqf, _ = manifold_configuration(g.alpha_f, g)
    for scale in (0.5, 2.0):
        qdm = scale * dqf
        sig_m = pinned_dynamics(qf, qdm, p).D[-1] @ qdm
        qdp, _ = impact_map(qf, qdm, p)
        qp, qdp = relabel(qf, qdp)
        sig_p = pinned_dynamics(qp, qdp, p).D[-1] @ qdp
        assert sig_p / sig_m == pytest.approx(delta, rel=1e-12)
        np.testing.assert_allclose(qdp / (g.c @ qdp), dq_plus, atol=1e-12)
    assert 0 < delta < 1


@pytest.mark.parametrize("T", [-50.0, -25.0, 0.0, 25.0])
def test_closed_form_matches_ode(funcs, T):
    z_i = funcs.delta_zd**2 * funcs.zeta_star_nominal
    tr = zd_step((funcs.alpha_i, z_i), ThrusterSchedule.constant(T, funcs.gait), funcs)
    zc = zeta_closed_form(funcs.alpha_f, z_i, T, funcs)
    assert abs(tr.zeta[-1] - zc) / abs(zc) < 1e-8


def test_profile_matches_ode_for_piecewise_schedule(funcs):
    bp = np.linspace(funcs.alpha_i, funcs.alpha_f, 5)
    sched = ThrusterSchedule(bp, [-20.0, 10.0, 0.0, 30.0])
    z_i = 0.8 * funcs.zeta_star_nominal
    tr = zd_step((funcs.alpha_i, z_i), sched, funcs)
    _, prof = zeta_profile(z_i, sched, funcs, tr.alpha)
    np.testing.assert_allclose(prof, tr.zeta, rtol=1e-9)
    phys = ThrusterSchedule(bp, [-20.0, 10.0, 0.0, 30.0], physical=True)
    tr = zd_step((funcs.alpha_i, z_i), phys, funcs)
    _, prof = zeta_profile(z_i, phys, funcs, tr.alpha)
    np.testing.assert_allclose(prof, tr.zeta, rtol=1e-9)


def test_time_and_velocity_consistency(funcs):
    lc = restricted_limit_cycle(None, funcs)
    # alpha_dot = kappa1 sigma, zeta = sigma^2 / 2
    np.testing.assert_allclose(lc.zeta, 0.5 * lc.sigma**2, rtol=1e-12)
    np.testing.assert_allclose(lc.alpha_dot, funcs.kappa1(lc.alpha) * lc.sigma, rtol=1e-12)
    T_ref = integrate.quad(lambda a: 1 / np.interp(a, lc.alpha, lc.alpha_dot), lc.alpha[0],
                           lc.alpha[-1], limit=200)[0]
    assert lc.t[-1] == pytest.approx(T_ref, rel=1e-4)
    assert lc.zeta[-1] == pytest.approx(funcs.zeta_star_nominal, rel=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.floats(-10.0, 40.0), st.floats(-10.0, 40.0))
def test_fixed_point_is_affine_in_thrust(T1, T2):
    funcs = _nominal_funcs()
    z = [fixed_point(ThrusterSchedule.constant(T, funcs.gait), funcs).zeta_star for T in (T1, T2)]
    Tm = 0.5 * (T1 + T2)
    zm = fixed_point(ThrusterSchedule.constant(Tm, funcs.gait), funcs).zeta_star
    assert abs(zm - 0.5 * (z[0] + z[1])) < 1e-9 * max(1.0, abs(zm))


def test_fixed_point_formula_vs_iteration(funcs):
    sched = ThrusterSchedule.constant(15.0, funcs.gait)
    fp = fixed_point(sched, funcs)
    seq = iterate_poincare(0.5 * fp.zeta_star, sched, funcs, 400)
    assert abs(seq[-1] - fp.zeta_star) < 1e-9 * fp.zeta_star
    assert abs(restricted_poincare(fp.zeta_star, sched, funcs) - fp.zeta_star) < 1e-9
    assert fp.slope == pytest.approx(funcs.delta_zd**2) and fp.stable
    # shift formula: zeta* moves by w T / (1 - delta^2)
    w = bF_integral(funcs.alpha_f, funcs.alpha_i, funcs)
    assert fp.shift == pytest.approx(w * 15.0 / (1 - funcs.delta_zd**2), rel=1e-12)


def test_poincare_converges_geometrically(funcs, rng):
    d2 = funcs.delta_zd**2
    z0 = funcs.zeta_star_nominal
    for start in rng.uniform(0.3, 3.0, 5) * z0:
        seq = iterate_poincare(start, None, funcs, 6)
        err = np.abs(seq - z0)
        np.testing.assert_allclose(err[1:] / err[:-1], d2, rtol=1e-6)


def test_shape_schedule_hits_shift_with_min_norm(funcs):
    bp = np.linspace(funcs.alpha_i, funcs.alpha_f, 4)
    sched = shape_schedule(123.0, bp, funcs)
    assert fixed_point(sched, funcs).shift == pytest.approx(123.0, abs=1e-9)
    w = segment_weights(sched, funcs)
    ref = np.linalg.pinv(w[None, :]) @ [(1 - funcs.delta_zd**2) * 123.0]
    np.testing.assert_allclose(sched.values, ref, rtol=1e-12)


def test_cancelling_breakpoints_preserve_fixed_point(funcs):
    bp = cancelling_breakpoints(funcs)
    w = segment_weights(ThrusterSchedule(bp, np.zeros(3)), funcs)
    assert w[0] == pytest.approx(w[2], rel=1e-12)
    assert w[0] == pytest.approx(w.sum() / 3, rel=1e-12)
    devs = []
    grid = np.linspace(funcs.alpha_i, funcs.alpha_f, 301)
    _, nom = zeta_profile(funcs.delta_zd**2 * funcs.zeta_star_nominal, None, funcs, grid)
    for kk in (0, 10, 20):
        s = ThrusterSchedule(bp, kk * np.array([-1.0, 0.0, 1.0]))
        fp = fixed_point(s, funcs)
        assert abs(fp.zeta_star - funcs.zeta_star_nominal) < 1e-8
        _, prof = zeta_profile(funcs.delta_zd**2 * fp.zeta_star, s, funcs, grid)
        devs.append(np.abs(prof - nom).max())
    assert devs[0] == 0 and devs[0] < devs[1] < devs[2]
    with pytest.raises(ValueError):
        cancelling_breakpoints(funcs, 0.6)


def test_infeasible_fixed_point(funcs):
    with pytest.raises(InfeasibleScheduleError):
        fixed_point(ThrusterSchedule.constant(-1e5, funcs.gait), funcs)


def test_step_failure_when_zeta_hits_zero(funcs):
    with pytest.raises(StepFailure) as exc:
        zd_step((funcs.alpha_i, 10.0), ThrusterSchedule.constant(-5000.0, funcs.gait), funcs)
    assert funcs.alpha_i <= exc.value.alpha < funcs.alpha_f
    with pytest.raises(StepFailure):
        restricted_poincare(1.0, ThrusterSchedule.constant(-5000.0, funcs.gait), funcs)


def test_schedule_validation_and_lookup(funcs):
    with pytest.raises(ValueError):
        ThrusterSchedule([0.0], [])
    with pytest.raises(ValueError):
        ThrusterSchedule([0.0, 1.0, 0.5], [1.0, 2.0])
    with pytest.raises(ValueError):
        ThrusterSchedule([0.0, 1.0], [1.0, 2.0])
    s = ThrusterSchedule([0.0, 0.5, 1.0], [1.0, 2.0])
    assert s.value_at(0.25) == 1.0 and s.value_at(0.75) == 2.0 and s.value_at(2.0) == 2.0
    assert ThrusterSchedule.from_dict(s.to_dict()).values.tolist() == [1.0, 2.0]
    with pytest.raises(ValueError):
        s.check_against(funcs)


def test_increment_is_linear_in_values(funcs, rng):
    bp = np.linspace(funcs.alpha_i, funcs.alpha_f, 4)
    v1, v2 = rng.normal(size=3), rng.normal(size=3)
    inc = [schedule_increment(ThrusterSchedule(bp, v), funcs) for v in (v1, v2, v1 + 2 * v2)]
    assert inc[2] == pytest.approx(inc[0] + 2 * inc[1], rel=1e-12)


def test_nominal_solution_endpoints(funcs):
    z_i = 100.0
    assert zeta_nominal(funcs.alpha_i, z_i, funcs) == z_i
    assert zeta_nominal(funcs.alpha_f, z_i, funcs) == pytest.approx(z_i + funcs.nominal_integral)


def test_kappa1_sign_change_rejected(p):
    A = np.array([[0.5, 9.0, -9.0, 9.0, -9.0, 9.0, 0.5], [-0.5, 0.0, 0.0, 0.0, 0.0, 0.0, -0.5]])
    g = GaitParams([0.0, 0.0, 1.0], A, -0.2, 0.2)
    with pytest.raises(InvalidGaitError):
        build_zero_dynamics(g, p)
