"""Coefficient fields on the plane.

Every spatial quantity in the package (conformal exponent, lambda modes,
connection and Higgs components, sources, gauges) is a field ``f(x, y)``
with values of a fixed shape: ``()`` for scalars, ``(n,)`` for vectors and
``(n, n)`` for matrices.  A field exposes

* ``f(x, y)`` -- value, broadcasting over array arguments, result shape
  ``np.broadcast(x, y).shape + f.shape``;
* ``f.grad(x, y)`` -- the pair of exact first partials ``(f_x, f_y)``.

:class:`PolyField` is the workhorse: a bivariate polynomial with array
coefficients, closed under sums, products and differentiation.  The other
classes wrap rational or transcendental expressions built from polynomials
(gauge transforms, exponentials) while keeping derivatives exact.
"""

from __future__ import annotations

from typing import Callable, Mapping

import numpy as np


def _as_xy(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return np.broadcast_arrays(x, y)


class PolyField:
    """Bivariate polynomial ``p(x, y) = sum_{i,j} c_ij x^i y^j``.

    Parameters
    ----------
    coeffs : array_like, shape (d+1, d+1) + value_shape
        ``coeffs[i, j]`` multiplies ``x**i * y**j``.
    """

    __array_priority__ = 100

    def __init__(self, coeffs):
        c = np.asarray(coeffs)
        if c.ndim < 2:
            raise ValueError("coefficient array needs at least two axes (i, j)")
        if not np.iscomplexobj(c):
            c = c.astype(float)
        c = _trim(c)
        self.coeffs = c
        self.coeffs.setflags(write=False)
        self._const = c.shape[0] == 1 and c.shape[1] == 1
        self._flat = c.reshape(c.shape[0] * c.shape[1], -1)
        self._partials = {}

    # -- constructors -------------------------------------------------------
    @classmethod
    def from_terms(cls, terms: Mapping[tuple[int, int], object] | list, shape=None):
        """Build from ``{(i, j): c}`` or a list of ``(i, j, c)`` triples."""
        if isinstance(terms, Mapping):
            items = [(i, j, c) for (i, j), c in terms.items()]
        else:
            items = list(terms)
        if not items:
            return cls.zeros(() if shape is None else shape)
        vals = [np.asarray(c) for _, _, c in items]
        vshape = vals[0].shape if shape is None else tuple(shape)
        deg = max(max(i, j) for i, j, _ in items)
        cplx = any(np.iscomplexobj(v) for v in vals)
        arr = np.zeros((deg + 1, deg + 1) + vshape, dtype=complex if cplx else float)
        for (i, j, _), v in zip(items, vals):
            arr[i, j] += np.broadcast_to(v, vshape)
        return cls(arr)

    @classmethod
    def constant(cls, value):
        v = np.asarray(value)
        return cls(v[None, None, ...])

    @classmethod
    def zeros(cls, shape=()):
        return cls(np.zeros((1, 1) + tuple(shape)))

    @classmethod
    def identity(cls, n: int):
        return cls.constant(np.eye(n))

    @classmethod
    def coordinate(cls, which: str):
        """The field ``x`` or ``y``."""
        c = np.zeros((2, 2))
        c[(1, 0) if which == "x" else (0, 1)] = 1.0
        return cls(c)

    @classmethod
    def random(cls, degree: int, shape=(), rng=None, scale=1.0, complex_=True):
        """Random polynomial of total degree ``<= degree`` (test fixtures)."""
        rng = np.random.default_rng(rng)
        terms = []
        for i in range(degree + 1):
            for j in range(degree + 1 - i):
                c = rng.standard_normal(shape)
                if complex_:
                    c = c + 1j * rng.standard_normal(shape)
                terms.append((i, j, scale * c))
        return cls.from_terms(terms, shape=shape)

    # -- basic attributes ---------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.coeffs.shape[2:]

    @property
    def degree(self) -> int:
        nz = np.argwhere(np.any(self.coeffs.reshape(self.coeffs.shape[:2] + (-1,)) != 0, axis=-1))
        return int(nz.sum(axis=1).max()) if len(nz) else 0

    @property
    def dtype(self):
        return self.coeffs.dtype

    def __repr__(self):
        return f"PolyField(degree={self.degree}, shape={self.shape})"

    # -- evaluation ---------------------------------------------------------
    def __call__(self, x, y):
        if self._const:
            shape = np.broadcast_shapes(np.shape(x), np.shape(y))
            return np.broadcast_to(self.coeffs[0, 0], shape + self.shape).copy()
        x, y = _as_xy(x, y)
        d0, d1 = self.coeffs.shape[:2]
        bshape = x.shape
        x, y = x.reshape(-1, 1), y.reshape(-1, 1)
        px = np.ones((x.shape[0], d0))
        py = np.ones((x.shape[0], d1))
        for i in range(1, d0):
            px[:, i : i + 1] = px[:, i - 1 : i] * x
        for j in range(1, d1):
            py[:, j : j + 1] = py[:, j - 1 : j] * y
        mono = (px[:, :, None] * py[:, None, :]).reshape(x.shape[0], d0 * d1)
        out = mono @ self._flat
        return out.reshape(bshape + self.shape)

    def dx(self) -> "PolyField":
        if "x" not in self._partials:
            self._partials["x"] = self._dx()
        return self._partials["x"]

    def dy(self) -> "PolyField":
        if "y" not in self._partials:
            self._partials["y"] = self._dy()
        return self._partials["y"]

    def _dx(self) -> "PolyField":
        c = self.coeffs
        if c.shape[0] == 1:
            return PolyField.zeros(self.shape)
        i = np.arange(1, c.shape[0]).reshape((-1, 1) + (1,) * (c.ndim - 2))
        return PolyField(c[1:] * i)

    def _dy(self) -> "PolyField":
        c = self.coeffs
        if c.shape[1] == 1:
            return PolyField.zeros(self.shape)
        j = np.arange(1, c.shape[1]).reshape((1, -1) + (1,) * (c.ndim - 2))
        return PolyField(c[:, 1:] * j)

    def grad(self, x, y):
        return self.dx()(x, y), self.dy()(x, y)

    # -- algebra ------------------------------------------------------------
    def _padded(self, other: "PolyField"):
        a, b = self.coeffs, other.coeffs
        d0 = max(a.shape[0], b.shape[0])
        d1 = max(a.shape[1], b.shape[1])
        pa = np.zeros((d0, d1) + a.shape[2:], dtype=np.result_type(a, b))
        pb = np.zeros((d0, d1) + b.shape[2:], dtype=np.result_type(a, b))
        pa[: a.shape[0], : a.shape[1]] = a
        pb[: b.shape[0], : b.shape[1]] = b
        return pa, pb

    def __add__(self, other):
        other = as_poly(other, self.shape)
        a, b = self._padded(other)
        return PolyField(a + b)

    __radd__ = __add__

    def __neg__(self):
        return PolyField(-self.coeffs)

    def __sub__(self, other):
        return self + (-as_poly(other, self.shape))

    def __rsub__(self, other):
        return as_poly(other, self.shape) - self

    def __mul__(self, other):
        """Scalar multiplication, or polynomial product when ``other`` is a
        scalar-valued PolyField (pointwise ``p * q``)."""
        if isinstance(other, PolyField):
            if other.shape == ():
                return _poly_product(self, other, lambda u, v: u * v)
            if self.shape == ():
                return _poly_product(self, other, lambda u, v: u * v)
            raise TypeError("use @ for products of array-valued fields")
        return PolyField(self.coeffs * np.asarray(other))

    __rmul__ = __mul__

    def __matmul__(self, other):
        other = as_poly(other)
        return _poly_product(self, other, lambda u, v: u @ v)

    def __rmatmul__(self, other):
        return as_poly(other) @ self

    def conj(self) -> "PolyField":
        return PolyField(np.conj(self.coeffs))

    def H(self) -> "PolyField":
        """Pointwise conjugate transpose of a matrix field."""
        return PolyField(np.conj(np.swapaxes(self.coeffs, -1, -2)))

    def T(self) -> "PolyField":
        return PolyField(np.swapaxes(self.coeffs, -1, -2))

    def map_values(self, fn: Callable[[np.ndarray], np.ndarray]) -> "PolyField":
        """Apply a linear map to every coefficient (e.g. reshape, kron)."""
        d0, d1 = self.coeffs.shape[:2]
        out = [[fn(self.coeffs[i, j]) for j in range(d1)] for i in range(d0)]
        return PolyField(np.array(out))


def _trim(c):
    flat = np.abs(c).reshape(c.shape[:2] + (-1,)).sum(axis=-1)
    rows = np.flatnonzero(flat.sum(axis=1))
    cols = np.flatnonzero(flat.sum(axis=0))
    d0 = rows[-1] + 1 if rows.size else 1
    d1 = cols[-1] + 1 if cols.size else 1
    return c[:d0, :d1]


def _poly_product(a: PolyField, b: PolyField, op) -> PolyField:
    ca, cb = a.coeffs, b.coeffs
    sample = op(np.ones(a.shape), np.ones(b.shape))
    out = np.zeros(
        (ca.shape[0] + cb.shape[0] - 1, ca.shape[1] + cb.shape[1] - 1) + np.shape(sample),
        dtype=np.result_type(ca, cb),
    )
    for i in range(ca.shape[0]):
        for j in range(ca.shape[1]):
            if not np.any(ca[i, j]):
                continue
            for k in range(cb.shape[0]):
                for l in range(cb.shape[1]):
                    out[i + k, j + l] += op(ca[i, j], cb[k, l])
    return PolyField(out)


def as_poly(value, shape=None) -> PolyField:
    if isinstance(value, PolyField):
        return value
    v = np.asarray(value)
    if shape is not None and v.shape != tuple(shape):
        v = np.broadcast_to(v, shape)
    return PolyField.constant(v)


class FuncField:
    """Field defined by callables for the value and the gradient."""

    def __init__(self, value: Callable, grad: Callable, shape=()):
        self._value = value
        self._grad = grad
        self.shape = tuple(shape)

    def __call__(self, x, y):
        x, y = _as_xy(x, y)
        return self._value(x, y)

    def grad(self, x, y):
        x, y = _as_xy(x, y)
        return self._grad(x, y)

    def __repr__(self):
        return f"FuncField(shape={self.shape})"


def exp_field(w: PolyField) -> FuncField:
    """Scalar field ``exp(w)`` with exact gradient ``exp(w) dw``."""
    wx, wy = w.dx(), w.dy()

    def value(x, y):
        return np.exp(w(x, y))

    def grad(x, y):
        e = np.exp(w(x, y))
        return e * wx(x, y), e * wy(x, y)

    return FuncField(value, grad, w.shape)


class InverseTimes:
    """Matrix field ``u^{-1} g`` for matrix fields ``u`` (invertible) and ``g``.

    The gradient uses ``d(u^{-1}) = -u^{-1} (du) u^{-1}``, so derivatives stay
    exact without closing the class under rational functions.
    """

    def __init__(self, u, g):
        self.u = u
        self.g = g
        self.shape = g.shape

    def __call__(self, x, y):
        return np.linalg.solve(self.u(x, y), self.g(x, y))

    def grad(self, x, y):
        u = self.u(x, y)
        ux, uy = self.u.grad(x, y)
        g = self.g(x, y)
        gx, gy = self.g.grad(x, y)
        ug = np.linalg.solve(u, g)
        return (
            np.linalg.solve(u, gx - ux @ ug),
            np.linalg.solve(u, gy - uy @ ug),
        )


def _binary(a, b, value_op, grad_op, shape):
    """Combine two fields pointwise; stays polynomial when both inputs are."""

    def value(x, y):
        return value_op(a(x, y), b(x, y))

    def grad(x, y):
        av, bv = a(x, y), b(x, y)
        (ax, ay), (bx, by) = a.grad(x, y), b.grad(x, y)
        return grad_op(av, ax, bv, bx), grad_op(av, ay, bv, by)

    return FuncField(value, grad, shape)


def field_add(a, b):
    if isinstance(a, PolyField) and isinstance(b, PolyField):
        return a + b
    return _binary(a, b, np.add, lambda av, ad, bv, bd: ad + bd, a.shape)


def field_sub(a, b):
    if isinstance(a, PolyField) and isinstance(b, PolyField):
        return a - b
    return _binary(a, b, np.subtract, lambda av, ad, bv, bd: ad - bd, a.shape)


def field_matmul(a, b):
    """Pointwise matrix product (matrix @ matrix or matrix @ vector)."""
    if isinstance(a, PolyField) and isinstance(b, PolyField):
        return a @ b

    def mm(u, v):
        if v.ndim == u.ndim - 1:
            return np.einsum("...ij,...j->...i", u, v)
        return u @ v

    shape = a.shape[:1] + b.shape[1:]
    return _binary(a, b, mm, lambda av, ad, bv, bd: mm(ad, bv) + mm(av, bd), shape)


def field_map(a, fn: Callable, shape):
    """Apply a pointwise *linear* map ``fn`` to a field (acts on trailing axes)."""
    if isinstance(a, PolyField):
        return a.map_values(fn)

    def value(x, y):
        return fn(a(x, y))

    def grad(x, y):
        gx, gy = a.grad(x, y)
        return fn(gx), fn(gy)

    return FuncField(value, grad, shape)


def zeros_like_field(shape=()):
    return PolyField.zeros(shape)
