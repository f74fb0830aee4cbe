import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import poly
from twistray import ConformalSurface, LambdaField, Scenario
from twistray.errors import CapReached, ExtensionNotConvex, ExtensionTrapped, GlancingRay
from twistray.flow import (
    boundary_fan,
    exit_times,
    extend_scenario,
    flow_states,
    generator_rhs,
    integrate_flow,
    nontrapping_certificate,
    random_interior_states,
    scattering_relation,
)


def test_generator_examples():
    np.testing.assert_allclose(generator_rhs(Scenario(), (0, 0, 0)), [1, 0, 0])
    np.testing.assert_allclose(generator_rhs(Scenario(lam=LambdaField.constant(1.0)), (0, 0, 0)), [1, 0, 1])
    sc = Scenario(surface=ConformalSurface(poly([(0, 1, 0.3)])))
    np.testing.assert_allclose(generator_rhs(sc, (0, 0, 0)), [1, 0, 0.3], atol=1e-15)


def test_lambda_field_flags_and_reality():
    th = LambdaField.real({1: poly([(0, 0, 0.2 + 0.1j), (1, 0, 0.3)])})
    assert th.is_thermostat and not th.is_magnetic and th.degree == 1
    assert th.reality_defect(np.linspace(-1, 1, 7), np.linspace(1, -1, 7)) == 0.0
    assert LambdaField.constant(0.4).is_magnetic
    t = np.linspace(0, 2 * np.pi, 9)
    np.testing.assert_allclose(th.reversed()(0.3, 0.2, t), -th(0.3, 0.2, t + np.pi), atol=1e-15)


def test_diameter_chord():
    tr = integrate_flow(Scenario(), (-1, 0, 0))
    assert tr.exit == "tau_plus"
    assert tr.tau_plus == pytest.approx(2.0, abs=1e-8)
    np.testing.assert_allclose(tr.states[-1, :2], [1, 0], atol=1e-8)
    assert tr.tau_minus == pytest.approx(0.0, abs=1e-12)


def test_magnetic_arc():
    tr = integrate_flow(Scenario(lam=LambdaField.constant(1.0)), (0, 0, 0))
    assert tr.tau_plus == pytest.approx(np.pi / 3, abs=1e-7)
    np.testing.assert_allclose(tr.states[-1, :2], [np.sqrt(3) / 2, 0.5], atol=1e-7)
    # every recorded point lies on the circle of radius 1 centred at (0, 1)
    np.testing.assert_allclose(np.hypot(tr.states[:, 0], tr.states[:, 1] - 1.0), 1.0, atol=1e-9)


def test_radius_ray_and_terminal_on_boundary(curved_magnetic):
    tr = integrate_flow(Scenario(), (0, 0, np.pi / 4))
    assert tr.tau_plus == pytest.approx(1.0, abs=1e-9)
    tr = integrate_flow(curved_magnetic, (0.1, -0.2, 2.0))
    assert abs(curved_magnetic.surface.rho(*tr.states[-1, :2])) < 1e-10


def test_trace_csv(tmp_path):
    tr = integrate_flow(Scenario(), (-1, 0, 0))
    path = tmp_path / "t.csv"
    tr.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,x,y,theta"
    assert len(lines) == len(tr.t) + 1


def test_cap_reached_for_trapped_flow():
    with pytest.raises(CapReached):
        integrate_flow(Scenario(lam=LambdaField.constant(5.0)), (0, 0, 0), t_max=5)
    tr = integrate_flow(Scenario(lam=LambdaField.constant(5.0)), (0, 0, 0), t_max=5, raise_on_cap=False)
    assert tr.exit == "capped"


def test_exit_time_examples():
    assert exit_times(Scenario(), (0, 0, 0)) == pytest.approx((1.0, 1.0), abs=1e-9)
    assert exit_times(Scenario(), (-1, 0, 0)) == pytest.approx((2.0, 0.0), abs=1e-9)


def test_chord_formula_on_fan():
    states, beta, alpha = boundary_fan(ConformalSurface(), 16, 8)
    tp, tm = exit_times(Scenario(), states)
    v = np.stack([np.cos(states[:, 2]), np.sin(states[:, 2])], axis=-1)
    expected = -2 * np.sum(states[:, :2] * v, axis=-1)
    np.testing.assert_allclose(tp, expected, atol=1e-8)
    np.testing.assert_allclose(tm, 0.0, atol=1e-12)


def test_scattering_relation_flat():
    sc = Scenario()
    np.testing.assert_allclose(scattering_relation(sc, (-1, 0, 0)), [1, 0, 0], atol=1e-9)
    states, _, _ = boundary_fan(sc.surface, 8, 5)
    out = scattering_relation(sc, states)
    v = np.stack([np.cos(states[:, 2]), np.sin(states[:, 2])], axis=-1)
    tau = -2 * np.sum(states[:, :2] * v, axis=-1)
    np.testing.assert_allclose(out[:, :2], states[:, :2] + tau[:, None] * v, atol=1e-9)
    np.testing.assert_allclose(out[:, 2], states[:, 2], atol=1e-12)


def test_scattering_relation_magnetic_self_convergence():
    sc = Scenario(lam=LambdaField.constant(1.0))
    s = np.array([-1.0, 0.0, np.pi / 2 - 0.4])
    coarse = scattering_relation(sc, s)
    fine = scattering_relation(sc.with_numerics(h=sc.numerics.step(sc.surface) / 16), s)
    np.testing.assert_allclose(coarse, fine, atol=1e-9)


def test_scattering_relation_is_an_involution(curved_magnetic):
    states, _, _ = boundary_fan(curved_magnetic.surface, 8, 6)
    out = scattering_relation(curved_magnetic, states)
    back = scattering_relation(curved_magnetic, out)
    np.testing.assert_allclose(back[:, :2], states[:, :2], atol=1e-6)
    dtheta = np.angle(np.exp(1j * (back[:, 2] - states[:, 2])))
    np.testing.assert_allclose(dtheta, 0.0, atol=1e-6)


def test_glancing_rejected():
    with pytest.raises(GlancingRay):
        scattering_relation(Scenario(), (1, 0, np.pi / 2))


def test_nontrapping_examples():
    rep = nontrapping_certificate(Scenario(), random_interior_states(ConformalSurface(), 50, 0))
    assert rep["max_deviation"] < 1e-5
    rep = nontrapping_certificate(Scenario(lam=LambdaField.constant(0.5)), random_interior_states(ConformalSurface(), 50, 1))
    assert rep["max_deviation"] < 1e-4
    rep = nontrapping_certificate(Scenario(), np.array([[0.2, 0.0, 0.0]]))
    assert rep["values"][0] == pytest.approx(2.0, abs=1e-9)


def test_extension_examples():
    ext = extend_scenario(Scenario(), 0.2)
    assert ext.certification["convexity_margin"] == pytest.approx(1 / 1.2)
    assert ext.surface.radius == pytest.approx(1.2)
    ext = extend_scenario(Scenario(lam=LambdaField.constant(0.5)), 0.2)
    assert ext.certification["convexity_margin"] == pytest.approx(1 / 1.2 - 0.5)
    with pytest.raises(ExtensionNotConvex):
        extend_scenario(Scenario(lam=LambdaField.constant(0.9)), 0.2)
    with pytest.raises(ExtensionTrapped):
        extend_scenario(Scenario(), 0.2, time_cap=0.1)


def test_unit_speed(curved_magnetic):
    tr = integrate_flow(curved_magnetic, (-0.3, 0.2, 1.0))
    x, y, th = tr.states[:, 0], tr.states[:, 1], tr.states[:, 2]
    v = curved_magnetic.surface.unit_vector(x, y, th)
    np.testing.assert_allclose(curved_magnetic.surface.inner(x, y, v, v), 1.0, atol=1e-10)
    # the velocity of the trace (finite differences) has the same length
    dt = np.diff(tr.t[:-1])
    vel = np.diff(tr.states[:-1, :2], axis=0) / dt[:, None]
    mid = 0.5 * (tr.states[:-2, :2] + tr.states[1:-1, :2])
    speed = curved_magnetic.surface.inner(mid[:, 0], mid[:, 1], vel, vel)
    np.testing.assert_allclose(speed, 1.0, atol=1e-5)


@given(st.floats(0.05, 0.4), st.floats(0.05, 0.4), st.integers(0, 1000))
def test_flow_group_property(t, r, seed):
    sc = Scenario(lam=LambdaField.real({0: 0.3, 1: poly([(0, 0, 0.1j)])}))
    z = random_interior_states(sc.surface, 4, seed, max_frac=0.1)
    lhs = flow_states(sc, z, t + r)
    rhs = flow_states(sc, flow_states(sc, z, r), t)
    np.testing.assert_allclose(lhs, rhs, atol=1e-8)


@pytest.mark.parametrize("lam", [LambdaField.constant(0.4), LambdaField.real({1: poly([(0, 0, 0.2), (0, 1, 0.1j)])})])
def test_time_reversal_consistency(lam):
    sc = Scenario(surface=ConformalSurface(poly([(1, 0, 0.1)])), lam=lam)
    z = random_interior_states(sc.surface, 20, 3)
    _, tm = exit_times(sc, z)
    rev = z.copy()
    rev[:, 2] += np.pi
    tp_rev, _ = exit_times(sc.with_lambda(lam.reversed()), rev)
    np.testing.assert_allclose(tm, tp_rev, atol=1e-8)


def test_rk4_self_convergence():
    sc = Scenario(lam=LambdaField.constant(1.0))
    errs = []
    for h in (0.1, 0.05, 0.025):
        tp, _ = exit_times(sc.with_numerics(h=h), (0, 0, 0))
        errs.append(abs(tp - np.pi / 3))
    assert errs[0] / errs[1] >= 8 and errs[1] / errs[2] >= 8


@pytest.mark.parametrize("turn", [np.pi / 2, -np.pi / 2])
def test_length_near_glancing(turn):
    # a tangent chord at distance eps from the unit circle has length 2 sqrt(eps (2 - eps))
    eps = 10.0 ** -np.arange(2, 9)
    b = 0.7
    z = np.stack([(1 - eps) * np.cos(b), (1 - eps) * np.sin(b), np.full_like(eps, b + turn)], axis=-1)
    tp, tm = exit_times(Scenario(), z)
    np.testing.assert_allclose(tp + tm, 2 * np.sqrt(eps * (2 - eps)), rtol=1e-6)
    tp, tm = exit_times(Scenario(lam=LambdaField.constant(0.3)), z)
    ratio = (tp + tm) / np.sqrt(eps)
    assert abs(ratio[-1] - ratio[-2]) < 1e-5 * ratio[-1]
