import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import poly
from twistray import AttenuationPair, ConformalSurface, GaugeElement, LambdaField, PolyField, Scenario, SourceTerm
from twistray.errors import BoundaryNonzero, DimensionMismatch, LeftManifold, SingularGauge
from twistray.fields import FuncField, exp_field
from twistray.flow import boundary_fan, exit_times, extend_scenario, flow_states, random_interior_states
from twistray.transport import (
    attenuated_transform,
    attenuation_eval,
    boundary_vanishing,
    cocycle,
    combine_sources,
    endomorphism_pair,
    gauge_equivalence_witness,
    gauge_transform,
    integrating_factor,
    kernel_element,
    nonabelian_transform,
    pseudolinearization_residual,
    transport_via_integrating_factor,
    unitarity_defect,
)


def const_pair(Phi):
    Phi = np.atleast_2d(np.asarray(Phi, dtype=complex))
    z = PolyField.zeros(Phi.shape)
    return AttenuationPair(z, z, PolyField.constant(Phi))


def chord_lengths(states):
    v = np.stack([np.cos(states[:, 2]), np.sin(states[:, 2])], axis=-1)
    return -2 * np.sum(states[:, :2] * v, axis=-1)


@pytest.fixture(scope="module")
def fan16():
    return boundary_fan(ConformalSurface(), 4, 4)[0]


def test_attenuation_eval_examples():
    I2 = PolyField.identity(2)
    Z = PolyField.zeros((2, 2))
    np.testing.assert_allclose(attenuation_eval(AttenuationPair(Z, Z, I2 * 0.7), ConformalSurface(), (0.3, 0.1, 2.0)), 0.7 * np.eye(2))
    pair = AttenuationPair(I2, Z, Z)
    np.testing.assert_allclose(attenuation_eval(pair, ConformalSurface(), (0, 0, 0)), np.eye(2))
    np.testing.assert_allclose(attenuation_eval(pair, ConformalSurface(PolyField.constant(0.5)), (0, 0, 0)), np.exp(-0.5) * np.eye(2))


def test_pair_validation():
    with pytest.raises(DimensionMismatch):
        AttenuationPair(PolyField.zeros((2, 2)), PolyField.zeros((2, 2)), PolyField.zeros((3, 3)))
    with pytest.raises(ValueError):
        AttenuationPair(PolyField.identity(2), PolyField.zeros((2, 2)), PolyField.zeros((2, 2)), unitary_connection=True)


def test_nonabelian_examples(fan16):
    sc = Scenario()
    np.testing.assert_allclose(nonabelian_transform(sc, AttenuationPair.zero(2), fan16), np.broadcast_to(np.eye(2), (len(fan16), 2, 2)), atol=1e-14)
    L = chord_lengths(fan16)
    C = nonabelian_transform(sc, const_pair(0.7), fan16)
    np.testing.assert_allclose(C[:, 0, 0], np.exp(0.7 * L), rtol=1e-10)
    C = nonabelian_transform(sc, const_pair(np.diag([0.4, -0.3])), fan16)
    np.testing.assert_allclose(C[:, 0, 0], np.exp(0.4 * L), rtol=1e-10)
    np.testing.assert_allclose(C[:, 1, 1], np.exp(-0.3 * L), rtol=1e-10)
    np.testing.assert_allclose(C[:, 0, 1], 0, atol=1e-15)


def test_attenuated_examples(fan16):
    sc = Scenario()
    one = SourceTerm(PolyField.constant(np.ones(1)), PolyField.zeros((1,)), PolyField.zeros((1,)))
    assert attenuated_transform(sc, AttenuationPair.zero(1), one, (-1, 0, 0))[0] == pytest.approx(2.0, abs=1e-10)
    c = 0.6
    L = chord_lengths(fan16)
    u = attenuated_transform(sc, const_pair(c), one, fan16)[:, 0]
    np.testing.assert_allclose(u, (np.exp(c * L) - 1) / c, rtol=1e-9)
    with pytest.raises(DimensionMismatch):
        attenuated_transform(sc, AttenuationPair.zero(2), one, fan16)


def test_cocycle_examples(magnetic):
    pair = AttenuationPair.random(2, 1, 0)
    z = random_interior_states(magnetic.surface, 10, 1, max_frac=0.3)
    np.testing.assert_allclose(cocycle(magnetic, pair, z, 0.0), np.broadcast_to(np.eye(2), (10, 2, 2)))
    C = cocycle(magnetic, const_pair(0.8), z, 0.3)
    np.testing.assert_allclose(C[:, 0, 0], np.exp(-0.8 * 0.3), rtol=1e-12)
    with pytest.raises(LeftManifold):
        cocycle(magnetic, pair, (0.9, 0, 0), 1.0)


@pytest.mark.parametrize("sc_name", ["magnetic", "thermostat", "curved_magnetic"])
def test_cocycle_law_and_determinant(sc_name, request):
    sc = request.getfixturevalue(sc_name)
    pair = AttenuationPair.random(2, 1, 5)
    rng = np.random.default_rng(2)
    z = random_interior_states(sc.surface, 40, rng, max_frac=0.3)
    t, r = rng.uniform(0.0, 0.3, (2, 40))
    lhs = cocycle(sc, pair, z, t + r)
    rhs = cocycle(sc, pair, flow_states(sc, z, t), r) @ cocycle(sc, pair, z, t)
    assert np.max(np.abs(lhs - rhs)) < 1e-8
    assert np.min(np.abs(np.linalg.det(lhs))) > 1e-12


def test_integrating_factor_examples(magnetic):
    ext = extend_scenario(magnetic)
    z = random_interior_states(magnetic.surface, 12, 3)
    np.testing.assert_allclose(integrating_factor(ext, AttenuationPair.zero(2), z), np.broadcast_to(np.eye(2), (12, 2, 2)))
    T, _ = exit_times(ext.outer, z)
    R = integrating_factor(ext, const_pair(0.5), z)[:, 0, 0]
    np.testing.assert_allclose(R, np.exp(0.5 * T), rtol=1e-9)


def test_integrating_factor_along_orbits(curved_magnetic):
    ext = extend_scenario(curved_magnetic)
    pair = AttenuationPair.random(2, 1, 8)
    z = random_interior_states(curved_magnetic.surface, 16, 4, max_frac=0.5)
    t = 0.2
    R0 = integrating_factor(ext, pair, z)
    Rt = integrating_factor(ext, pair, flow_states(curved_magnetic, z, t))
    assert np.max(np.abs(Rt - cocycle(curved_magnetic, pair, z, t) @ R0)) < 1e-7
    # (X + lambda V) R + Att R = 0 by central differences along the flow
    h = 1e-3
    Rp = integrating_factor(ext, pair, flow_states(curved_magnetic, z, h))
    Rm = integrating_factor(ext, pair, flow_states(curved_magnetic, z, -h))
    pde = (Rp - Rm) / (2 * h) + pair(curved_magnetic.surface, z) @ R0
    assert np.max(np.abs(pde)) < 1e-5


def test_integral_representation_examples(magnetic):
    ext = extend_scenario(Scenario())
    states = boundary_fan(ConformalSurface(), 4, 4)[0]
    src = SourceTerm(*(PolyField.random(1, (2,), k) for k in range(3)))
    plain = transport_via_integrating_factor(ext, AttenuationPair.zero(2), src, states)
    direct = attenuated_transform(Scenario(), AttenuationPair.zero(2), src, states)
    np.testing.assert_allclose(plain, direct, rtol=1e-8, atol=1e-10)
    one = SourceTerm(PolyField.constant(np.ones(1)), PolyField.zeros((1,)), PolyField.zeros((1,)))
    u = transport_via_integrating_factor(ext, const_pair(0.4), one, states)[:, 0]
    np.testing.assert_allclose(u, (np.exp(0.4 * chord_lengths(states)) - 1) / 0.4, rtol=1e-8)
    pair = AttenuationPair.random(2, 1, 3)
    ext = extend_scenario(magnetic)
    a = transport_via_integrating_factor(ext, pair, src, states)
    b = attenuated_transform(magnetic, pair, src, states)
    assert np.max(np.abs(a - b)) / np.max(np.abs(b)) < 1e-6


def test_gauge_identity_and_scalar_rule():
    pair = AttenuationPair.random(1, 1, 1)
    same = gauge_transform(pair, GaugeElement(PolyField.identity(1)))
    x, y = np.random.default_rng(0).uniform(-0.7, 0.7, (2, 20))
    for c in ("Ax", "Ay", "Phi"):
        np.testing.assert_allclose(getattr(same, c)(x, y), getattr(pair, c)(x, y), atol=1e-14)
    w = boundary_vanishing(poly([(1, 0, 0.3), (0, 1, -0.2j)]))
    u = exp_field(w)
    u_mat = FuncField(lambda x, y: u(x, y)[..., None, None],
                      lambda x, y: tuple(g[..., None, None] for g in u.grad(x, y)), (1, 1))
    moved = gauge_transform(pair, GaugeElement(u_mat))
    np.testing.assert_allclose(moved.Ax(x, y)[..., 0, 0], pair.Ax(x, y)[..., 0, 0] + w.dx()(x, y), atol=1e-13)
    np.testing.assert_allclose(moved.Ay(x, y)[..., 0, 0], pair.Ay(x, y)[..., 0, 0] + w.dy()(x, y), atol=1e-13)
    np.testing.assert_allclose(moved.Phi(x, y), pair.Phi(x, y), atol=1e-13)


def test_singular_gauge_rejected():
    with pytest.raises(SingularGauge):
        GaugeElement(PolyField.identity(2) * PolyField.coordinate("x"))


def test_gauge_scattering_invariance(magnetic):
    pair = AttenuationPair.random(2, 1, 4)
    W = PolyField.random(1, (2, 2), 9, 0.3)
    g = GaugeElement(PolyField.identity(2) + boundary_vanishing(W))
    assert g.boundary_flag
    fan = boundary_fan(magnetic.surface, 8, 4)[0]
    rep = gauge_equivalence_witness(magnetic, pair, gauge_transform(pair, g), g, fan)
    assert rep["algebraic_residual"] < 1e-8
    assert rep["scattering_residual"] < 1e-6
    rep = gauge_equivalence_witness(magnetic, pair, pair, GaugeElement(PolyField.identity(2)), fan)
    assert rep["algebraic_residual"] == 0.0 and rep["scattering_residual"] == 0.0
    bumped = AttenuationPair(pair.Ax, pair.Ay, pair.Phi + PolyField.identity(2) * 0.1)
    rep = gauge_equivalence_witness(magnetic, pair, bumped, GaugeElement(PolyField.identity(2)), fan)
    assert rep["scattering_residual"] > 1e-3


def test_endomorphism_pair():
    A = AttenuationPair.random(2, 1, 1)
    E = endomorphism_pair(A, A)
    z = random_interior_states(ConformalSurface(), 5, 0)
    M = E(ConformalSurface(), z)
    np.testing.assert_allclose(M @ np.eye(2).ravel(), 0, atol=1e-14)
    a, b = const_pair(0.3 + 0.1j), const_pair(-0.2)
    np.testing.assert_allclose(endomorphism_pair(a, b).Phi(0.1, 0.2), [[0.5 + 0.1j]])
    rng = np.random.default_rng(3)
    Ma, Mb = rng.standard_normal((2, 2, 2)) + 1j * rng.standard_normal((2, 2, 2))
    E = endomorphism_pair(const_pair(Ma), const_pair(Mb)).Phi(0.0, 0.0)
    H = rng.standard_normal((50, 2, 2)) + 1j * rng.standard_normal((50, 2, 2))
    got = (E @ H.reshape(50, 4, 1)).reshape(50, 2, 2)
    assert np.max(np.abs(got - (Ma @ H - H @ Mb))) < 1e-13
    with pytest.raises(DimensionMismatch):
        endomorphism_pair(AttenuationPair.zero(1), AttenuationPair.zero(2))


def test_pseudolinearization_examples(magnetic, fan16):
    A = AttenuationPair.random(2, 1, 1)
    assert pseudolinearization_residual(magnetic, A, A, fan16)["residual"] < 1e-9
    rep = pseudolinearization_residual(Scenario(), const_pair(0.5), const_pair(-0.2), fan16)
    assert rep["residual"] < 1e-9
    B = AttenuationPair.random(2, 1, 2)
    assert pseudolinearization_residual(magnetic, A, B, fan16)["residual"] < 1e-5


def test_kernel_element_examples(magnetic, fan16):
    pair = AttenuationPair.random(2, 1, 6)
    f = kernel_element(pair, PolyField.zeros((2,)))
    np.testing.assert_allclose(attenuated_transform(magnetic, pair, f, fan16), 0, atol=1e-15)
    rho = boundary_vanishing(PolyField.constant(np.ones(1)))
    f = kernel_element(AttenuationPair.zero(1), rho)
    np.testing.assert_allclose(f.ax(0.3, 0.2), [-0.6]) and np.testing.assert_allclose(f.ay(0.3, 0.2), [-0.4])
    assert np.max(np.abs(attenuated_transform(magnetic, AttenuationPair.zero(1), f, fan16))) < 1e-10
    q = PolyField.random(1, (2,), 11)
    f = kernel_element(pair, boundary_vanishing(q))
    assert np.max(np.abs(attenuated_transform(magnetic, pair, f, fan16))) < 1e-6
    with pytest.raises(BoundaryNonzero):
        kernel_element(pair, q)


def test_kernel_solution_is_minus_p_inside(magnetic):
    pair = AttenuationPair.random(2, 1, 6)
    p = boundary_vanishing(PolyField.random(1, (2,), 12))
    f = kernel_element(pair, p)
    z = random_interior_states(magnetic.surface, 8, 0, max_frac=0.6)
    u = attenuated_transform(magnetic, pair, f, z, check=False)
    np.testing.assert_allclose(u, -p(z[:, 0], z[:, 1]), atol=1e-8)


def test_unitary_pair_gives_unitary_scattering(thermostat, fan16):
    pair = AttenuationPair.random(3, 1, 2, skew=True)
    assert unitarity_defect(nonabelian_transform(thermostat, pair, fan16)) < 1e-7


@settings(max_examples=10)
@given(st.complex_numbers(max_magnitude=3, allow_nan=False, allow_infinity=False),
       st.complex_numbers(max_magnitude=3, allow_nan=False, allow_infinity=False))
def test_linearity_in_the_source(a, b):
    # RK4 is linear in the source term, so a coarse step tests the same identity
    sc = Scenario(lam=LambdaField.constant(0.3)).with_numerics(h=0.02)
    fan = boundary_fan(sc.surface, 3, 2)[0]
    pair = AttenuationPair.random(2, 1, 1)
    f = SourceTerm(*(PolyField.random(1, (2,), k) for k in range(3)))
    g = SourceTerm(*(PolyField.random(1, (2,), k + 3) for k in range(3)))
    lhs = attenuated_transform(sc, pair, combine_sources([(a, f), (b, g)]), fan)
    rhs = a * attenuated_transform(sc, pair, f, fan) + b * attenuated_transform(sc, pair, g, fan)
    np.testing.assert_allclose(lhs, rhs, atol=1e-9)
