import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thrusthzd import kernels
from thrusthzd.errors import ConfigError, InvalidStateError
from thrusthzd.model import (ModelParams, angular_momentum, coriolis_matrix, gravity_batch,
                             gravity_vector, hip_position, inertia_batch, mount_position,
                             pinned_dynamics, point_positions, swing_foot_height,
                             swing_foot_position, thrust_direction, thrust_map_batch,
                             total_energy, unpinned_dynamics)

from .oracles import oracle_for

angles = st.floats(-math.pi, math.pi, allow_nan=False)
rates = st.floats(-10.0, 10.0, allow_nan=False)
vec3 = st.tuples(angles, angles, angles).map(np.array)
rvec3 = st.tuples(rates, rates, rates).map(np.array)


def test_inertia_matches_symbolic_lagrangian(p, rng):
    D_o, C_o, G_o, BF_o, _, _ = oracle_for(p)
    for _ in range(50):
        q = rng.uniform(-math.pi, math.pi, 3)
        qd = rng.uniform(-5, 5, 3)
        t = pinned_dynamics(q, qd, p)
        np.testing.assert_allclose(t.D, np.array(D_o(q), dtype=float), atol=1e-12)
        np.testing.assert_allclose(gravity_vector(q, p), np.ravel(G_o(q)), atol=1e-10)
        np.testing.assert_allclose(coriolis_matrix(q, qd, p) @ qd,
                                   np.array(C_o(q, qd), dtype=float) @ qd, atol=1e-10)
        np.testing.assert_allclose(t.Omega, np.array(C_o(q, qd), dtype=float) @ qd + np.ravel(G_o(q)),
                                   atol=1e-10)
        np.testing.assert_allclose(t.B_F, np.ravel(BF_o(q)), atol=1e-12)


@pytest.mark.parametrize("mount,theta", [((0.3, 0.1), 1.2), ((0.5, -0.2), math.pi / 2)])
def test_thrust_map_with_offset_mount(mount, theta, rng):
    p = ModelParams(thruster_mount=mount, thruster_angle_theta=theta)
    _, _, _, BF_o, _, pm_o = oracle_for(p)
    for _ in range(20):
        q = rng.uniform(-1, 1, 3)
        np.testing.assert_allclose(pinned_dynamics(q, np.zeros(3), p).B_F, np.ravel(BF_o(q)), atol=1e-12)
        np.testing.assert_allclose(mount_position(q, p), np.ravel(pm_o(q)), atol=1e-12)


def test_body_fixed_thrust_rotates_with_torso(rng):
    p = ModelParams(thrust_body_fixed=True, thruster_angle_theta=0.3)
    q = rng.uniform(-1, 1, 3)
    th_torso = q[0] + q[2]
    d = thrust_direction(q, p)
    np.testing.assert_allclose(d, [math.cos(0.3 - th_torso), math.sin(0.3 - th_torso)])
    # B_F is the mount Jacobian projected on that direction (direction frozen at q)
    h = 1e-6
    J = np.column_stack([(mount_position(q + h * e, p) - mount_position(q - h * e, p)) / (2 * h)
                         for e in np.eye(3)])
    np.testing.assert_allclose(pinned_dynamics(q, np.zeros(3), p).B_F, J.T @ d, atol=1e-8)


@settings(max_examples=60, deadline=None)
@given(vec3, rvec3)
def test_inertia_spd_and_skew_property(q, qd):
    p = ModelParams()
    D = pinned_dynamics(q, qd, p).D
    assert np.allclose(D, D.T, atol=1e-12)
    assert np.linalg.eigvalsh(D).min() > 0
    # complex-step time derivative of D along qd
    Ddot = np.imag(inertia_batch((q + 1e-30j * qd)[None, :], p)[0]) / 1e-30
    N = Ddot - 2 * coriolis_matrix(q, qd, p)
    np.testing.assert_allclose(N + N.T, 0, atol=1e-9)


def test_gravity_is_gradient_of_potential(p, rng):
    for _ in range(20):
        q = rng.uniform(-2, 2, 3)
        h = 1e-6
        fd = [(total_energy(q + h * e, np.zeros(3), p)[1] - total_energy(q - h * e, np.zeros(3), p)[1])
              / (2 * h) for e in np.eye(3)]
        np.testing.assert_allclose(gravity_vector(q, p), fd, atol=1e-6)


def test_energy_uses_inertia(p, rng):
    q, qd = rng.normal(size=3), rng.normal(size=3)
    ke, _ = total_energy(q, qd, p)
    assert ke == pytest.approx(0.5 * qd @ pinned_dynamics(q, qd, p).D @ qd, rel=1e-13)


def test_batch_helpers_match_pointwise(p, rng):
    Q = rng.uniform(-1, 1, (7, 3))
    np.testing.assert_allclose(inertia_batch(Q, p), [pinned_dynamics(q, q, p).D for q in Q], atol=1e-12)
    np.testing.assert_allclose(gravity_batch(Q, p), [gravity_vector(q, p) for q in Q], atol=1e-12)
    np.testing.assert_allclose(thrust_map_batch(Q, p), [pinned_dynamics(q, q, p).B_F for q in Q],
                               atol=1e-12)


def test_kinematics_geometry(p):
    q = np.array([0.4, -0.9, 0.2])
    th = p.consts.T @ q
    hip = hip_position(q, p)
    np.testing.assert_allclose(hip, [math.sin(th[0]), math.cos(th[0])])
    pts = point_positions(q, p)
    np.testing.assert_allclose(pts[2], hip + 0.5 * np.array([math.sin(th[1]), math.cos(th[1])]))
    foot, _ = swing_foot_position(np.concatenate([q, [0.0, 0.0]]), p)
    assert swing_foot_height(q, p) == pytest.approx(foot[1], abs=1e-14)
    assert np.linalg.norm(foot - hip) == pytest.approx(p.leg_length)
    # symmetric legs put the swing foot on the ground
    q_sym = np.array([0.3, -2 * 0.2 - 0.3, 0.2])  # swing angle = -stance angle
    assert swing_foot_height(q_sym, p) == pytest.approx(0.0, abs=1e-14)


def test_swing_foot_jacobian_by_finite_differences(p, rng):
    qu = np.concatenate([rng.uniform(-1, 1, 3), rng.normal(size=2)])
    _, E2 = swing_foot_position(qu, p)
    h = 1e-6
    fd = np.column_stack([(swing_foot_position(qu + h * e, p)[0] - swing_foot_position(qu - h * e, p)[0])
                          / (2 * h) for e in np.eye(5)])
    np.testing.assert_allclose(E2, fd, atol=1e-8)


def test_unpinned_reduces_to_pinned(p, rng):
    q, qd = rng.uniform(-1, 1, 3), rng.normal(size=3)
    u = unpinned_dynamics(np.concatenate([q, [0.2, 0.0]]), np.concatenate([qd, [0, 0]]), p)
    t = pinned_dynamics(q, qd, p)
    np.testing.assert_allclose(u.D_u[:3, :3], t.D)
    assert np.allclose(u.D_u, u.D_u.T)
    assert np.linalg.eigvalsh(u.D_u).min() > 0
    np.testing.assert_allclose(u.D_u[3:, 3:], p.total_mass * np.eye(2))
    # standing still: the vertical generalized force is the weight
    u0 = unpinned_dynamics(np.concatenate([q, [0, 0]]), np.zeros(5), p)
    assert u0.Omega_u[4] == pytest.approx(p.total_mass * p.gravity)


def test_unpinned_inertia_from_kinetic_energy(p, rng):
    # kinetic energy with a moving foot equals the point-mass sum
    q, qd, vf = rng.uniform(-1, 1, 3), rng.normal(size=3), rng.normal(size=2)
    u = unpinned_dynamics(np.concatenate([q, [0, 0]]), np.zeros(5), p)
    x = np.concatenate([qd, vf])
    h = 1e-7
    vel = (point_positions(q + h * qd, p, h * vf) - point_positions(q - h * qd, p, -h * vf)) / (2 * h)
    ke = 0.5 * float(p.consts.masses @ np.sum(vel**2, axis=1))
    assert 0.5 * x @ u.D_u @ x == pytest.approx(ke, rel=1e-7)


def test_angular_momentum_is_last_row(p, rng):
    q, qd = rng.normal(size=3), rng.normal(size=3)
    assert angular_momentum(q, qd, p) == pytest.approx(pinned_dynamics(q, qd, p).D[-1] @ qd, rel=1e-13)


def test_static_equilibrium_upright():
    p = ModelParams()
    assert np.allclose(gravity_vector(np.zeros(3), p), 0.0)


@pytest.mark.parametrize("field,value", [("leg_mass", 0.0), ("torso_length", -1.0),
                                         ("leg_com_ratio", 1.5), ("gravity", float("nan")),
                                         ("friction_mu", 0.0)])
def test_invalid_params(field, value):
    with pytest.raises(ConfigError):
        ModelParams(**{field: value})


def test_params_roundtrip(tmp_path):
    p = ModelParams(thruster_mount=(0.4, 0.1), friction_mu=0.5)
    p.save(tmp_path / "m.json")
    assert ModelParams.load(tmp_path / "m.json") == p
    with pytest.raises(ConfigError):
        ModelParams.from_dict({"legmass": 1.0})


def test_nonfinite_state_rejected(p):
    with pytest.raises(InvalidStateError):
        pinned_dynamics([0.0, np.nan, 0.0], np.zeros(3), p)


def test_backends_agree(p, g, k, rng):
    py = kernels.backend_module("python")
    try:
        cy = kernels.backend_module("cython")
    except ImportError:
        pytest.skip("compiled backend not built")
    args = p.consts.kernel_args()
    cl = args + (g.c, g.A, g.alpha_i, g.alpha_f, k.Kp, k.Kd)
    for _ in range(50):
        q, qd = rng.uniform(-0.5, 0.5, 3), rng.normal(size=3)
        for a, b in zip(py.pinned_terms(q, qd, *args), cy.pinned_terms(q, qd, *args)):
            np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)
        F = rng.normal() * 20
        ra = py.closed_loop(q, qd, F, 0.0, 0, *cl)
        rb = cy.closed_loop(q, qd, F, 0.0, 0, *cl)
        for a, b in zip(ra, rb):
            np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-9)
        ra = py.closed_loop(q, qd, 0.0, 3.0, 1, *cl)
        rb = cy.closed_loop(q, qd, 0.0, 3.0, 1, *cl)
        for a, b in zip(ra, rb):
            np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-9)


def test_backend_selection_reported():
    assert kernels.BACKEND in ("python", "cython")
    with pytest.raises(ValueError):
        kernels.backend_module("fortran")
