import json
from importlib import resources

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.interpolate import BPoly

from thrusthzd.errors import ConfigError, GaitDesignError
from thrusthzd.gait import (DesignSpec, GaitParams, bezier_eval, design_nominal_gait,
                            desired_outputs, manifold_configuration, manifold_configuration_batch,
                            nominal_gait, output, timing_variable)
from thrusthzd.hybrid import impact_map, relabel
from thrusthzd.model import ModelParams, swing_foot_height
from thrusthzd.zerodyn import restricted_poincare


@settings(max_examples=50, deadline=None)
@given(st.integers(3, 8), st.floats(0.0, 1.0), st.integers(0, 2**31 - 1))
def test_bezier_matches_bernstein_oracle(M, s, seed):
    A = np.random.default_rng(seed).normal(size=(2, M + 1))
    b = bezier_eval(A, s)
    for row in range(2):
        bp = BPoly(A[row][:, None], [0.0, 1.0])
        assert b.h[row] == pytest.approx(bp(s), abs=1e-12)
        assert b.dh[row] == pytest.approx(bp.derivative(1)(s), abs=1e-10)
        assert b.ddh[row] == pytest.approx(bp.derivative(2)(s), abs=1e-9)


def test_bezier_endpoints_and_scaling():
    A = np.array([[0.1, 0.4, -0.2, 0.3, 0.5]])
    M = 4
    b0 = bezier_eval(A, 0.0, span=0.5)
    b1 = bezier_eval(A, 1.0, span=0.5)
    assert b0.h[0] == pytest.approx(0.1)
    assert b1.h[0] == pytest.approx(0.5)
    assert b0.dh[0] == pytest.approx(M * (0.4 - 0.1) / 0.5)
    assert b1.dh[0] == pytest.approx(M * (0.5 - 0.3) / 0.5)


def test_bezier_clamping_is_reported():
    A = np.array([[0.0, 1.0, 2.0, 3.0]])
    b = bezier_eval(A, 1.2)
    assert b.clamped and b.h[0] == pytest.approx(3.0)
    b = bezier_eval(A, 1.2, clamp=False)
    assert not b.clamped and b.h[0] == pytest.approx(3.6)  # linear coefficients extend linearly


def test_batch_configuration_matches_pointwise(g):
    al = np.linspace(g.alpha_i, g.alpha_f, 13)
    Q, dQ, ddQ = manifold_configuration_batch(al, g)
    for j, a in enumerate(al):
        q, dq, ddq = manifold_configuration(a, g)
        np.testing.assert_allclose(Q[j], q, atol=1e-14)
        np.testing.assert_allclose(dQ[j], dq, atol=1e-12)
        np.testing.assert_allclose(ddQ[j], ddq, atol=1e-10)


def test_manifold_states_have_zero_output(g, rng):
    for a in rng.uniform(g.alpha_i, g.alpha_f, 10):
        q, dq, _ = manifold_configuration(a, g)
        y, yd = output(q, 1.7 * dq, g)
        assert np.abs(y).max() < 1e-14 and np.abs(yd).max() < 1e-13
        assert timing_variable(q, g)[0] == pytest.approx(a, abs=1e-14)


def test_dq_dalpha_by_finite_differences(g):
    a, h = 0.05, 1e-6
    _, dq, ddq = manifold_configuration(a, g)
    qp, dqp, _ = manifold_configuration(a + h, g)
    qm, dqm, _ = manifold_configuration(a - h, g)
    np.testing.assert_allclose(dq, (qp - qm) / (2 * h), atol=1e-8)
    np.testing.assert_allclose(ddq, (dqp - dqm) / (2 * h), atol=1e-6)


def test_fixture_is_hybrid_invariant(g, p):
    qf, dqf, _ = manifold_configuration(g.alpha_f, g)
    assert swing_foot_height(qf, p) == pytest.approx(0.0, abs=1e-12)
    qdp, _ = impact_map(qf, 1.3 * dqf, p)
    qp, qdp = relabel(qf, qdp)
    y, yd = output(qp, qdp, g)
    assert np.linalg.norm(np.concatenate([y, yd])) < 1e-9
    assert timing_variable(qp, g)[0] == pytest.approx(g.alpha_i, abs=1e-12)


def test_fixture_has_fixed_point(funcs):
    z = funcs.zeta_star_nominal
    assert z > 0
    assert abs(restricted_poincare(z, None, funcs) - z) < 1e-9


def test_fixture_swing_clearance(g, p):
    al = np.linspace(g.alpha_i, g.alpha_f, 201)
    h = np.array([swing_foot_height(q, p) for q in manifold_configuration_batch(al, g)[0]])
    assert h[0] == pytest.approx(0.0, abs=1e-12) and h[-1] == pytest.approx(0.0, abs=1e-12)
    assert h[-1] - h[-2] < 0  # descending at touchdown


def test_fixture_reproduced_by_designer(p):
    g = design_nominal_gait(p)
    shipped = resources.files("thrusthzd").joinpath("gaits/nominal.json").read_text()
    assert json.dumps(g.to_dict(), indent=2) + "\n" == shipped


def test_gait_roundtrip(g, tmp_path):
    g.save(tmp_path / "g.json")
    g2 = GaitParams.load(tmp_path / "g.json")
    assert np.array_equal(g2.A, g.A) and np.array_equal(g2.c, g.c)
    assert (g2.alpha_i, g2.alpha_f) == (g.alpha_i, g.alpha_f)


@pytest.mark.parametrize("kw", [dict(A=np.zeros((3, 5))), dict(A=np.zeros((2, 3))),
                                dict(c=[1.0, 0.0, 0.0]), dict(alpha_f=-0.2),
                                dict(A=np.full((2, 5), np.nan))])
def test_gait_validation(kw):
    base = dict(c=[0.0, 0.0, 1.0], A=np.zeros((2, 5)), alpha_i=-0.2, alpha_f=0.2)
    with pytest.raises(ConfigError):
        GaitParams(**{**base, **kw})


def test_order_mismatch_rejected(g):
    d = g.to_dict()
    d["bezier_order_M"] = 4
    with pytest.raises(ConfigError):
        GaitParams.from_dict(d)


@pytest.mark.parametrize("kw,cond", [(dict(step_length=0.0), "step_length"),
                                     (dict(step_length=2.5), "step_length"),
                                     (dict(speed=-1.0), "speed"),
                                     (dict(bezier_order=3), "bezier_order")])
def test_design_rejects_bad_specs(kw, cond):
    with pytest.raises(GaitDesignError) as exc:
        design_nominal_gait(ModelParams(), **kw)
    assert exc.value.condition == cond


def test_design_spec_roundtrip():
    sp = DesignSpec(speed=1.5)
    assert DesignSpec.from_dict(sp.to_dict()) == sp
    with pytest.raises(ConfigError):
        DesignSpec.from_dict({"sped": 1.0})


def test_desired_outputs_span(g):
    b = desired_outputs(g.alpha_i, g)
    np.testing.assert_allclose(b.h, g.A[:, 0])
    np.testing.assert_allclose(desired_outputs(g.alpha_f, g).h, g.A[:, -1])
    assert nominal_gait().bezier_order_M == 6
