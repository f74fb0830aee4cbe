import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from twistray.fields import InverseTimes, PolyField, exp_field, field_matmul

seeds = st.integers(0, 2**31 - 1)


def central_diff(f, x, y, h=1e-5):
    fx = (f(x + h, y) - f(x - h, y)) / (2 * h)
    fy = (f(x, y + h) - f(x, y - h)) / (2 * h)
    return fx, fy


def test_evaluation_matches_monomials():
    p = PolyField.from_terms([(0, 0, 1.0), (2, 1, -3.0), (0, 3, 0.5j)])
    x, y = 0.3, -0.7
    assert p(x, y) == pytest.approx(1.0 - 3.0 * x**2 * y + 0.5j * y**3, abs=1e-15)


def test_matrix_values_and_identity():
    I = PolyField.identity(3)
    np.testing.assert_array_equal(I(np.zeros(4), np.zeros(4)), np.broadcast_to(np.eye(3), (4, 3, 3)))
    x = PolyField.coordinate("x")
    assert x(2.0, 5.0) == 2.0 and PolyField.coordinate("y")(2.0, 5.0) == 5.0


def test_partials_match_finite_differences_on_1000_points():
    rng = np.random.default_rng(0)
    p = PolyField.random(4, (2, 2), rng)
    x, y = rng.uniform(-1, 1, (2, 1000))
    gx, gy = p.grad(x, y)
    fx, fy = central_diff(p, x, y)
    scale = np.maximum(1.0, np.abs(gx))
    assert np.max(np.abs(gx - fx) / scale) < 1e-7
    scale = np.maximum(1.0, np.abs(gy))
    assert np.max(np.abs(gy - fy) / scale) < 1e-7


def test_degree_and_trimming():
    p = PolyField(np.zeros((5, 5)))
    assert p.degree == 0 and p.coeffs.shape[:2] == (1, 1)
    q = PolyField.from_terms([(1, 2, 1.0)])
    assert q.degree == 3
    assert q.dx().degree == 2 and q.dx().dx().degree == 0


def test_random_is_reproducible():
    a = PolyField.random(2, (2,), 7)
    b = PolyField.random(2, (2,), 7)
    np.testing.assert_array_equal(a.coeffs, b.coeffs)


def test_conjugate_transpose():
    rng = np.random.default_rng(1)
    p = PolyField.random(2, (2, 2), rng)
    x, y = rng.uniform(-1, 1, (2, 10))
    np.testing.assert_allclose(p.H()(x, y), np.conj(np.swapaxes(p(x, y), -1, -2)))
    np.testing.assert_allclose(p.T()(x, y), np.swapaxes(p(x, y), -1, -2))


def test_exp_field_gradient():
    w = PolyField.from_terms([(1, 0, 0.3), (1, 1, -0.2)])
    e = exp_field(w)
    x, y = np.array([0.1, -0.4]), np.array([0.5, 0.2])
    gx, gy = e.grad(x, y)
    fx, fy = central_diff(e, x, y)
    np.testing.assert_allclose(gx, fx, atol=1e-9)
    np.testing.assert_allclose(gy, fy, atol=1e-9)


def test_inverse_times_gradient():
    rng = np.random.default_rng(2)
    u = PolyField.identity(2) + PolyField.random(1, (2, 2), rng, 0.2)
    g = PolyField.random(2, (2, 2), rng)
    f = InverseTimes(u, g)
    x, y = rng.uniform(-0.8, 0.8, (2, 20))
    np.testing.assert_allclose(f(x, y), np.linalg.solve(u(x, y), g(x, y)))
    gx, gy = f.grad(x, y)
    fx, fy = central_diff(f, x, y)
    np.testing.assert_allclose(gx, fx, atol=1e-8)
    np.testing.assert_allclose(gy, fy, atol=1e-8)


@given(seeds, seeds)
def test_sum_and_product_are_pointwise(sa, sb):
    a = PolyField.random(2, (2, 2), sa)
    b = PolyField.random(3, (2, 2), sb)
    x, y = np.random.default_rng(sa ^ sb).uniform(-1, 1, (2, 16))
    np.testing.assert_allclose((a + b)(x, y), a(x, y) + b(x, y), atol=1e-12)
    np.testing.assert_allclose((a @ b)(x, y), a(x, y) @ b(x, y), atol=1e-11)
    np.testing.assert_allclose(field_matmul(a, b)(x, y), a(x, y) @ b(x, y), atol=1e-11)


@given(seeds, seeds)
def test_product_rule(sa, sb):
    a = PolyField.random(2, (), sa)
    b = PolyField.random(2, (), sb)
    x, y = np.random.default_rng(sa).uniform(-1, 1, (2, 8))
    lhs = (a * b).dx()(x, y)
    rhs = a.dx()(x, y) * b(x, y) + a(x, y) * b.dx()(x, y)
    np.testing.assert_allclose(lhs, rhs, atol=1e-11)
