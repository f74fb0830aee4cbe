import numpy as np
import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from conftest import poly
from twistray import ConformalSurface, LambdaField, Scenario
from twistray.errors import OffBoundary
from twistray.flow import flow_states, random_interior_states
from twistray.geometry import (
    PhaseFunction,
    check_structure_equations,
    frame_apply,
    frame_gram,
    gaussian_curvature,
    second_fundamental_form,
    strict_lambda_convexity_report,
)

x_, y_, t_ = sp.symbols("x y theta", real=True)

SURFACES = [
    ConformalSurface(),
    ConformalSurface(poly([(1, 0, 0.2), (0, 2, 0.1)])),
    ConformalSurface(poly([(2, 0, 0.3), (0, 2, 0.3)])),
    ConformalSurface(poly([(1, 1, -0.25), (3, 0, 0.1)]), radius=1.3),
    ConformalSurface(poly([(0, 1, 0.4), (2, 2, 0.2)]), radius=0.8),
]


def sym_function(expr):
    return PhaseFunction.from_sympy(expr, (x_, y_, t_))


def test_curvature_examples():
    assert gaussian_curvature(ConformalSurface(), 0.3, 0.1) == 0.0
    c = 0.3
    s = ConformalSurface(poly([(2, 0, c), (0, 2, c)]))
    assert gaussian_curvature(s, 0.0, 0.0) == pytest.approx(-4 * c, abs=1e-15)
    assert gaussian_curvature(ConformalSurface(poly([(1, 0, 0.1)])), 0.0, 0.0) == 0.0


@pytest.mark.parametrize("surface", SURFACES[1:3])
def test_gauss_bonnet(surface):
    # int_M K dA + int_dM Pi ds = 2 pi for a disk
    r = surface.radius

    def area_density(rad, ang):
        x, y = rad * np.cos(ang), rad * np.sin(ang)
        return gaussian_curvature(surface, x, y) * np.exp(2 * surface.phi(x, y)) * rad

    K_int, _ = integrate.dblquad(area_density, 0, 2 * np.pi, 0, r, epsabs=1e-11)

    def boundary_density(b):
        x, y = r * np.cos(b), r * np.sin(b)
        e = np.exp(-surface.phi(x, y))
        v = (-e * np.sin(b), e * np.cos(b))
        return second_fundamental_form(surface, (x, y), v) * np.exp(surface.phi(x, y)) * r

    P_int, _ = integrate.quad(boundary_density, 0, 2 * np.pi, epsabs=1e-12)
    assert K_int + P_int == pytest.approx(2 * np.pi, abs=1e-8)


def test_frame_apply_examples():
    flat = ConformalSurface()
    u = sym_function(x_)
    assert frame_apply(flat, "X", u, (0, 0, 0)) == pytest.approx(1.0)
    curved = SURFACES[1]
    v = sym_function(x_**2 * y_ + 1)
    assert frame_apply(curved, "V", v, (0.2, 0.3, 1.1)) == 0
    w = sym_function(t_)
    s = random_interior_states(flat, 10, 0)
    np.testing.assert_allclose(frame_apply(flat, "X", w, s), 0.0, atol=1e-15)


def test_geodesic_vector_field_matches_flow_derivative():
    surface = SURFACES[3]
    sc = Scenario(surface=surface)
    expr = sp.sin(x_) * y_ + sp.cos(2 * t_) * x_
    u = sym_function(expr)
    f = sp.lambdify((x_, y_, t_), expr, "numpy")
    s = random_interior_states(surface, 20, 3, max_frac=0.7)
    h = 1e-3
    zp, zm = flow_states(sc, s, h), flow_states(sc, s, -h)
    fd = (f(*zp.T) - f(*zm.T)) / (2 * h)
    np.testing.assert_allclose(frame_apply(surface, "X", u, s).real, fd, atol=1e-6)


def test_structure_examples():
    flat = ConformalSurface()
    s = random_interior_states(flat, 100, 1)
    assert check_structure_equations(flat, sym_function(x_ * sp.sin(t_)), s)["max"] < 1e-12
    surf = ConformalSurface(poly([(1, 0, 0.2), (0, 2, 0.1)]))
    s = random_interior_states(surf, 100, 2)
    assert check_structure_equations(surf, sym_function(y_ * sp.cos(t_)), s)["max"] < 1e-10
    assert check_structure_equations(surf, sym_function(sp.Integer(3)), s)["max"] == 0.0


def test_commutator_closed_form_matches_sympy():
    # [X, V] u computed symbolically from the frame formula, independent of the code's Jacobians
    phi = 0.2 * x_ + 0.1 * y_**2
    E = sp.exp(-phi)
    Xop = lambda f: E * (sp.cos(t_) * sp.diff(f, x_) + sp.sin(t_) * sp.diff(f, y_)  # noqa: E731
                         + (-sp.diff(phi, x_) * sp.sin(t_) + sp.diff(phi, y_) * sp.cos(t_)) * sp.diff(f, t_))
    Vop = lambda f: sp.diff(f, t_)  # noqa: E731
    u = y_ * sp.cos(t_) + x_**2 * sp.sin(2 * t_)
    comm = sp.lambdify((x_, y_, t_), Xop(Vop(u)) - Vop(Xop(u)), "numpy")
    surf = ConformalSurface(poly([(1, 0, 0.2), (0, 2, 0.1)]))
    s = random_interior_states(surf, 30, 4)
    got = frame_apply(surf, "Xperp", sym_function(u), s)
    np.testing.assert_allclose(got.real, comm(*s.T), atol=1e-12)


@given(st.integers(0, 4), st.integers(0, 10_000))
def test_structure_equations_on_random_test_functions(k, seed):
    surface = SURFACES[k]
    rng = np.random.default_rng(seed)
    a = rng.standard_normal(6) * 0.5
    expr = (a[0] * x_**2 * y_ + a[1] * y_) * sp.cos(t_) + (a[2] * x_ + a[3] * x_ * y_) * sp.sin(2 * t_) + a[4] * x_ + a[5]
    s = random_interior_states(surface, 100, rng)
    assert check_structure_equations(surface, sym_function(expr), s)["max"] < 1e-10


@pytest.mark.parametrize("surface", SURFACES)
def test_frame_is_orthonormal(surface):
    s = random_interior_states(surface, 200, 5)
    G = frame_gram(surface, s)
    assert np.max(np.abs(G - np.eye(3))) < 1e-12


def test_second_fundamental_form_flat():
    for r in (1.0, 2.0):
        s = ConformalSurface(radius=r)
        for b in np.linspace(0, 2 * np.pi, 9):
            v = (-np.sin(b), np.cos(b))
            assert second_fundamental_form(s, (r * np.cos(b), r * np.sin(b)), v) == pytest.approx(1 / r)


def test_second_fundamental_form_matches_tangent_geodesic_departure():
    # A geodesic tangent to a convex boundary at b leaves the disk; its metric
    # distance from the boundary grows like Pi(v, v) t^2 / 2.
    surface = ConformalSurface(poly([(1, 0, 0.1)]))
    sc = Scenario(surface=surface)
    b = (1.0, 0.0)
    v = np.exp(-0.1) * np.array([0.0, 1.0])
    expected = second_fundamental_form(surface, b, v)

    def departure(t):
        z = flow_states(sc.with_numerics(h=t / 200), np.array([1.0, 0.0, np.pi / 2]), t)
        return 2 * np.exp(surface.phi(*b)) * (np.hypot(z[0], z[1]) - 1.0) / t**2

    t = 0.005
    richardson = 2 * departure(t / 2) - departure(t)
    assert richardson == pytest.approx(expected, abs=1e-5)
    assert expected == pytest.approx(np.exp(-0.1) * 1.1, abs=1e-14)


def test_second_fundamental_form_rejects_off_boundary():
    with pytest.raises(OffBoundary):
        second_fundamental_form(ConformalSurface(), (0.9, 0.0), (0.0, 1.0))
    with pytest.raises(ValueError):
        second_fundamental_form(ConformalSurface(), (1.0, 0.0), (1.0, 0.0))


@pytest.mark.parametrize("lam, margin", [(0.0, 1.0), (0.5, 0.5), (1.5, -0.5)])
def test_convexity_margins(lam, margin):
    rep = strict_lambda_convexity_report(ConformalSurface(), LambdaField.constant(lam))
    assert rep["margin"] == pytest.approx(margin, abs=1e-12)
    assert rep["convex"] == (margin > 0)


def test_convexity_needs_enough_samples():
    with pytest.raises(ValueError):
        strict_lambda_convexity_report(ConformalSurface(), LambdaField(), n_boundary=4)
