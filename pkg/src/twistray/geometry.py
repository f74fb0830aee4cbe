"""Conformal disk surfaces and the canonical frame of the unit circle bundle.

A surface is the round disk ``x^2 + y^2 <= radius^2`` carrying the metric
``g = exp(2 phi) (dx^2 + dy^2)``.  A unit tangent vector at ``(x, y)`` is
described by its angle ``theta`` in the chart,
``v = exp(-phi) (cos theta, sin theta)``, so the unit circle bundle is the
solid torus ``disk x S^1`` with coordinates ``(x, y, theta)``.

In these coordinates, with ``E = exp(-phi)``,

    X     = E (cos t d_x + sin t d_y + (-phi_x sin t + phi_y cos t) d_t)
    X_perp = E (sin t d_x - cos t d_y + ( phi_x cos t + phi_y sin t) d_t)
    V     = d_t

and ``X_perp = [X, V]``.  Vector fields are handled as coefficient triples
over ``(d_x, d_y, d_t)`` together with their Jacobians, which is all that
is needed to evaluate commutators exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import OffBoundary
from .fields import PolyField, as_poly

FRAME_TAGS = ("X", "Xperp", "V")


@dataclass(frozen=True)
class PhaseState:
    """Point ``(x, y, theta)`` of the unit circle bundle (arrays allowed)."""

    x: float
    y: float
    theta: float

    def as_array(self) -> np.ndarray:
        return np.stack(np.broadcast_arrays(self.x, self.y, self.theta), axis=-1).astype(float)

    @classmethod
    def from_array(cls, a) -> "PhaseState":
        a = np.asarray(a, dtype=float)
        return cls(a[..., 0], a[..., 1], a[..., 2])


def as_states(s) -> np.ndarray:
    """Coerce a PhaseState, a list of them, or an array to shape (..., 3)."""
    if isinstance(s, PhaseState):
        return s.as_array()
    if isinstance(s, (list, tuple)) and s and isinstance(s[0], PhaseState):
        return np.stack([p.as_array() for p in s])
    a = np.asarray(s, dtype=float)
    if a.shape[-1] != 3:
        raise ValueError(f"expected trailing axis of length 3, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class ConformalSurface:
    phi: PolyField = field(default_factory=lambda: PolyField.zeros())
    radius: float = 1.0

    def __post_init__(self):
        phi = as_poly(self.phi)
        if phi.shape != ():
            raise ValueError("conformal exponent must be scalar valued")
        if np.iscomplexobj(phi.coeffs) and np.any(phi.coeffs.imag != 0):
            raise ValueError("conformal exponent must be real")
        object.__setattr__(self, "phi", PolyField(np.real(phi.coeffs)))
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        px, py = self.phi.dx(), self.phi.dy()
        object.__setattr__(self, "_d1", (px, py))
        object.__setattr__(self, "_d2", (px.dx(), px.dy(), py.dy()))

    def with_radius(self, radius: float) -> "ConformalSurface":
        return ConformalSurface(self.phi, radius)

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius

    # -- pointwise geometry -------------------------------------------------
    def rho(self, x, y):
        """Boundary defining function, positive inside."""
        return self.radius**2 - np.asarray(x) ** 2 - np.asarray(y) ** 2

    def phi_jet(self, x, y):
        """``(phi, phi_x, phi_y, phi_xx, phi_xy, phi_yy)`` at the given points."""
        px, py = self._d1
        pxx, pxy, pyy = self._d2
        return (self.phi(x, y), px(x, y), py(x, y), pxx(x, y), pxy(x, y), pyy(x, y))

    def conformal_factor(self, x, y):
        return np.exp(2.0 * self.phi(x, y))

    def unit_vector(self, x, y, theta):
        e = np.exp(-self.phi(x, y))
        return np.stack([e * np.cos(theta), e * np.sin(theta)], axis=-1)

    def inner(self, x, y, v, w):
        """Metric inner product of coordinate vectors ``v``, ``w`` at (x, y)."""
        return self.conformal_factor(x, y) * np.sum(np.asarray(v) * np.asarray(w), axis=-1)

    def inward_normal(self, x, y):
        """Unit (in g) inward normal at a boundary point."""
        e = np.exp(-self.phi(x, y))
        r = np.hypot(x, y)
        return np.stack([-e * x / r, -e * y / r], axis=-1)

    def sasaki_metric(self, x, y):
        """Coordinate matrix of the Sasaki metric on (x, y, theta).

        ``G = exp(2 phi)(dx^2 + dy^2) + psi (x) psi`` where
        ``psi = dtheta - phi_y dx + phi_x dy`` is the connection form.
        """
        p, px, py = self.phi(x, y), *[d(x, y) for d in self._d1]
        psi = np.stack(np.broadcast_arrays(-py, px, np.ones_like(p)), axis=-1)
        G = psi[..., :, None] * psi[..., None, :]
        c = np.exp(2 * p)
        G[..., 0, 0] += c
        G[..., 1, 1] += c
        return G


def gaussian_curvature(surface: ConformalSurface, x, y):
    """``K = -exp(-2 phi) (phi_xx + phi_yy)``."""
    p, _, _, pxx, _, pyy = surface.phi_jet(x, y)
    return -np.exp(-2.0 * p) * (pxx + pyy)


def frame_field(surface: ConformalSurface, tag: str, x, y, theta):
    """Coefficients and Jacobian of a frame vector field.

    Returns
    -------
    coef : ndarray, shape (..., 3)
        Components over ``(d_x, d_y, d_theta)``.
    jac : ndarray, shape (..., 3, 3)
        ``jac[..., a, b] = d coef_a / d z_b`` with ``z = (x, y, theta)``.
    """
    x, y, theta = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (x, y, theta)))
    coef = np.zeros(x.shape + (3,))
    jac = np.zeros(x.shape + (3, 3))
    if tag == "V":
        coef[..., 2] = 1.0
        return coef, jac
    p, px, py, pxx, pxy, pyy = surface.phi_jet(x, y)
    E = np.exp(-p)
    c, s = np.cos(theta), np.sin(theta)
    if tag == "X":
        raw = (c, s, -px * s + py * c)
        draw_x = (0 * c, 0 * s, -pxx * s + pxy * c)
        draw_y = (0 * c, 0 * s, -pxy * s + pyy * c)
        draw_t = (-s, c, -px * c - py * s)
    elif tag == "Xperp":
        raw = (s, -c, px * c + py * s)
        draw_x = (0 * c, 0 * s, pxx * c + pxy * s)
        draw_y = (0 * c, 0 * s, pxy * c + pyy * s)
        draw_t = (c, s, -px * s + py * c)
    else:
        raise ValueError(f"unknown frame tag {tag!r}; expected one of {FRAME_TAGS}")
    for a in range(3):
        coef[..., a] = E * raw[a]
        # d(E f) = E (df - f dphi)
        jac[..., a, 0] = E * (draw_x[a] - raw[a] * px)
        jac[..., a, 1] = E * (draw_y[a] - raw[a] * py)
        jac[..., a, 2] = E * draw_t[a]
    return coef, jac


@dataclass
class PhaseFunction:
    """Test function on SM with exact derivatives in ``(x, y, theta)``.

    ``grad`` returns shape (..., 3); ``hess`` (optional) shape (..., 3, 3).
    """

    value: Callable
    grad: Callable
    hess: Callable | None = None

    @classmethod
    def from_sympy(cls, expr, symbols):
        """Lambdify a sympy expression in symbols ``(x, y, theta)``."""
        import sympy as sp

        syms = list(symbols)
        g = [sp.diff(expr, s) for s in syms]
        h = [[sp.diff(gi, s) for s in syms] for gi in g]
        fv = sp.lambdify(syms, expr, "numpy")
        fg = [sp.lambdify(syms, gi, "numpy") for gi in g]
        fh = [[sp.lambdify(syms, hij, "numpy") for hij in row] for row in h]

        def _b(val, ref):
            return np.broadcast_to(np.asarray(val, dtype=complex), np.shape(ref))

        def value(x, y, t):
            return _b(fv(x, y, t), np.broadcast(x, y, t))

        def grad(x, y, t):
            ref = np.broadcast(x, y, t)
            return np.stack([_b(f(x, y, t), ref) for f in fg], axis=-1)

        def hess(x, y, t):
            ref = np.broadcast(x, y, t)
            return np.stack(
                [np.stack([_b(f(x, y, t), ref) for f in row], axis=-1) for row in fh], axis=-2
            )

        return cls(value, grad, hess)


def _split(s):
    a = as_states(s)
    return a[..., 0], a[..., 1], a[..., 2]


def frame_apply(surface: ConformalSurface, tag: str, u: PhaseFunction, s):
    """``(W u)(s)`` for the frame vector ``W`` named by ``tag``."""
    x, y, t = _split(s)
    coef, _ = frame_field(surface, tag, x, y, t)
    return np.sum(coef * u.grad(x, y, t), axis=-1)


def _compose(surface, tag1, tag2, u, x, y, t):
    """``W1 (W2 u)`` from first and second derivatives of ``u``."""
    c1, _ = frame_field(surface, tag1, x, y, t)
    c2, j2 = frame_field(surface, tag2, x, y, t)
    g = u.grad(x, y, t)
    h = u.hess(x, y, t)
    first = np.einsum("...i,...ji,...j->...", c1, j2, g)
    second = np.einsum("...i,...j,...ij->...", c1, c2, h)
    return first + second


def commutator_apply(surface, tag1, tag2, u: PhaseFunction, s):
    """``([W1, W2] u)(s)`` computed as ``W1 W2 u - W2 W1 u``."""
    x, y, t = _split(s)
    return _compose(surface, tag1, tag2, u, x, y, t) - _compose(surface, tag2, tag1, u, x, y, t)


def check_structure_equations(surface: ConformalSurface, u: PhaseFunction, samples) -> dict:
    """Residuals of ``[X,V]=X_perp``, ``[X_perp,V]=-X``, ``[X,X_perp]=-KV``."""
    x, y, t = _split(samples)
    K = gaussian_curvature(surface, x, y)
    r1 = commutator_apply(surface, "X", "V", u, samples) - frame_apply(surface, "Xperp", u, samples)
    r2 = commutator_apply(surface, "Xperp", "V", u, samples) + frame_apply(surface, "X", u, samples)
    r3 = commutator_apply(surface, "X", "Xperp", u, samples) + K * frame_apply(surface, "V", u, samples)
    res = {
        "[X,V]-Xperp": float(np.max(np.abs(r1))),
        "[Xperp,V]+X": float(np.max(np.abs(r2))),
        "[X,Xperp]+KV": float(np.max(np.abs(r3))),
    }
    res["max"] = max(res.values())
    return res


def frame_gram(surface: ConformalSurface, s) -> np.ndarray:
    """Sasaki Gram matrix of ``(X, -X_perp, V)`` at the given states."""
    x, y, t = _split(s)
    cols = [frame_field(surface, tag, x, y, t)[0] for tag in FRAME_TAGS]
    cols[1] = -cols[1]
    F = np.stack(cols, axis=-1)
    G = surface.sasaki_metric(x, y)
    return np.swapaxes(F, -1, -2) @ G @ F


def _check_on_boundary(surface, x, y, tol=1e-10):
    off = np.abs(np.hypot(x, y) - surface.radius)
    if np.any(off > tol):
        raise OffBoundary(f"point off the boundary circle by {float(np.max(off)):.3e}", witness=(x, y))


def second_fundamental_form(surface: ConformalSurface, b, v) -> float:
    """``Pi_b(v, v)`` of the boundary circle, positive for the flat disk.

    Uses the inward normal; for ``g = exp(2 phi)|dx|^2`` the geodesic
    curvature of the circle of radius r is
    ``exp(-phi) (1 + x phi_x + y phi_y) / r``.
    """
    x, y = float(b[0]), float(b[1])
    _check_on_boundary(surface, x, y)
    v = np.asarray(v, dtype=float)
    tangency = abs(v[0] * x + v[1] * y) / (np.hypot(*v) * surface.radius)
    if tangency > 1e-8:
        raise ValueError("v is not tangent to the boundary")
    p, px, py = surface.phi_jet(x, y)[:3]
    kappa = np.exp(-p) * (1.0 + x * px + y * py) / surface.radius
    return float(kappa * surface.inner(x, y, v, v))


def boundary_tangents(surface: ConformalSurface, beta):
    """Boundary points and their two unit tangent angles (ccw, cw)."""
    beta = np.asarray(beta, dtype=float)
    r = surface.radius
    return r * np.cos(beta), r * np.sin(beta), beta + np.pi / 2, beta - np.pi / 2


def strict_lambda_convexity_report(surface: ConformalSurface, lam, n_boundary: int = 64) -> dict:
    """Minimum of ``Pi(v,v) + <lambda(x,v) i v, nu>`` over sampled tangents.

    ``lam`` is anything callable as ``lam(x, y, theta)`` returning real values
    (a :class:`~twistray.flow.LambdaField`).
    """
    if n_boundary < 8:
        raise ValueError("n_boundary must be at least 8")
    beta = 2 * np.pi * np.arange(n_boundary) / n_boundary
    bx, by, t_ccw, t_cw = boundary_tangents(surface, beta)
    nu = surface.inward_normal(bx, by)
    best = (np.inf, None)
    for theta in (t_ccw, t_cw):
        v = surface.unit_vector(bx, by, theta)
        iv = np.stack([-v[..., 1], v[..., 0]], axis=-1)
        lv = np.real(lam(bx, by, theta))
        pi = np.array([second_fundamental_form(surface, (a, b), w) for a, b, w in zip(bx, by, v)])
        margin = pi + lv * surface.inner(bx, by, iv, nu)
        k = int(np.argmin(margin))
        if margin[k] < best[0]:
            best = (float(margin[k]), PhaseState(float(bx[k]), float(by[k]), float(theta[k] % (2 * np.pi))))
    return {"margin": best[0], "witness": best[1], "convex": best[0] > 0}
