"""Attenuated and nonabelian lambda-ray transforms.

An attenuation pair ``(A, Phi)`` (matrix one-form plus matrix function)
defines the matrix function on SM

    Att(x, v) = A_x(x) v^1 + A_y(x) v^2 + Phi(x),   v = exp(-phi)(cos t, sin t).

Along a lambda-geodesic starting at an influx state ``s`` with exit time
``tau`` the scattering data is ``C(s) = U(0)`` where

    dU/dt + Att(phi_t s) U = 0,   U(tau) = Id,

and the attenuated transform of a source ``f`` is ``u(0)`` where

    du/dt + Att(phi_t s) u = -f(phi_t s),   u(tau) = 0.

Both terminal-value problems are solved by first marching forward to the
exit state and then integrating the reversed system from the exit state
back to ``s`` with the matrix/vector unknown carried along.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BoundaryNonzero, DimensionMismatch, LeftManifold, SingularGauge
from .fields import (
    FuncField,
    InverseTimes,
    PolyField,
    as_poly,
    field_add,
    field_map,
    field_matmul,
    field_sub,
)
from .flow import _steps_for, check_boundary_states, march_fixed, march_to_exit
from .geometry import PhaseState, as_states


def _unit_v(surface, z):
    e = np.exp(-surface.phi(z[..., 0], z[..., 1]))
    return e * np.cos(z[..., 2]), e * np.sin(z[..., 2])


def _is_skew(values, tol=1e-10):
    return float(np.max(np.abs(values + np.conj(np.swapaxes(values, -1, -2))))) <= tol


def _disk_samples(radius, n_r=8, n_a=24):
    r = radius * np.sqrt((np.arange(n_r) + 0.5) / n_r)
    a = 2 * np.pi * np.arange(n_a) / n_a
    R, Aa = np.meshgrid(r, a, indexing="ij")
    x = np.concatenate([[0.0], (R * np.cos(Aa)).ravel(), radius * np.cos(a)])
    y = np.concatenate([[0.0], (R * np.sin(Aa)).ravel(), radius * np.sin(a)])
    return x, y


def _boundary_samples(radius, n=64):
    a = 2 * np.pi * np.arange(n) / n
    return radius * np.cos(a), radius * np.sin(a)


@dataclass(frozen=True)
class AttenuationPair:
    """Matrix one-form ``A = A_x dx + A_y dy`` and Higgs field ``Phi``.

    With ``unitary_connection`` / ``skew_higgs`` set, skew-Hermitian values
    are verified on a sample of the unit disk at construction.
    """

    Ax: object
    Ay: object
    Phi: object
    unitary_connection: bool = False
    skew_higgs: bool = False

    def __post_init__(self):
        shapes = {tuple(f.shape) for f in (self.Ax, self.Ay, self.Phi)}
        if len(shapes) != 1:
            raise DimensionMismatch(f"pair components have different shapes {shapes}")
        shape = shapes.pop()
        if len(shape) != 2 or shape[0] != shape[1]:
            raise DimensionMismatch(f"pair components must be square matrices, got {shape}")
        x, y = _disk_samples(1.5)
        if self.unitary_connection and not (_is_skew(self.Ax(x, y)) and _is_skew(self.Ay(x, y))):
            raise ValueError("connection flagged unitary but A is not skew-Hermitian on samples")
        if self.skew_higgs and not _is_skew(self.Phi(x, y)):
            raise ValueError("Higgs field flagged skew but Phi is not skew-Hermitian on samples")

    @property
    def n(self) -> int:
        return self.Ax.shape[0]

    @classmethod
    def zero(cls, n: int) -> "AttenuationPair":
        z = PolyField.zeros((n, n))
        return cls(z, z, z)

    @classmethod
    def from_polys(cls, Ax, Ay, Phi, **flags) -> "AttenuationPair":
        return cls(as_poly(Ax), as_poly(Ay), as_poly(Phi), **flags)

    @classmethod
    def random(cls, n: int, degree: int = 1, rng=None, scale: float = 0.5, skew: bool = False):
        """Random polynomial pair; ``skew=True`` gives a unitary pair."""
        rng = np.random.default_rng(rng)
        comps = [PolyField.random(degree, (n, n), rng, scale) for _ in range(3)]
        if skew:
            comps = [(c - c.H()) * 0.5 for c in comps]
        return cls(*comps, unitary_connection=skew, skew_higgs=skew)

    def __call__(self, surface, z):
        """``Att`` at states ``z`` of shape (..., 3); result (..., n, n)."""
        z = np.asarray(z, dtype=float)
        x, y = z[..., 0], z[..., 1]
        v1, v2 = _unit_v(surface, z)
        return self.Ax(x, y) * v1[..., None, None] + self.Ay(x, y) * v2[..., None, None] + self.Phi(x, y)


def attenuation_eval(pair: AttenuationPair, surface, s):
    return pair(surface, as_states(s))


@dataclass(frozen=True)
class SourceTerm:
    """``f(x, v) = f0(x) + alpha_x(x) v^1 + alpha_y(x) v^2`` with values in C^n."""

    f0: object
    ax: object
    ay: object

    def __post_init__(self):
        shapes = {tuple(f.shape) for f in (self.f0, self.ax, self.ay)}
        if len(shapes) != 1 or len(next(iter(shapes))) != 1:
            raise DimensionMismatch(f"source components must share a vector shape, got {shapes}")

    @property
    def n(self) -> int:
        return self.f0.shape[0]

    @classmethod
    def zero(cls, n: int) -> "SourceTerm":
        z = PolyField.zeros((n,))
        return cls(z, z, z)

    def __call__(self, surface, z):
        z = np.asarray(z, dtype=float)
        x, y = z[..., 0], z[..., 1]
        v1, v2 = _unit_v(surface, z)
        return self.f0(x, y) + self.ax(x, y) * v1[..., None] + self.ay(x, y) * v2[..., None]

    def scaled(self, c) -> "SourceTerm":
        return combine_sources([(c, self)])


def combine_sources(terms) -> SourceTerm:
    """Linear combination ``sum c_i f_i`` of source terms."""
    parts = []
    for attr in ("f0", "ax", "ay"):
        acc = None
        for c, src in terms:
            f = getattr(src, attr)
            f = f * c if isinstance(f, PolyField) else field_map(f, lambda v, c=c: c * v, f.shape)
            acc = f if acc is None else field_add(acc, f)
        parts.append(acc)
    return SourceTerm(*parts)


@dataclass(frozen=True)
class GaugeElement:
    """Matrix field ``u`` on the disk; ``boundary_flag`` is ``u = Id`` on the boundary."""

    u: object
    radius: float = 1.0
    boundary_flag: bool = field(init=False)
    max_condition: float = field(init=False)

    def __post_init__(self):
        n = self.u.shape[0]
        bx, by = _boundary_samples(self.radius)
        flag = float(np.max(np.abs(self.u(bx, by) - np.eye(n)))) <= 1e-10
        x, y = _disk_samples(self.radius)
        vals = self.u(x, y)
        cond = np.linalg.cond(vals)
        if not np.all(np.isfinite(cond)) or np.max(cond) > 1e12:
            k = int(np.argmax(np.where(np.isfinite(cond), cond, np.inf)))
            raise SingularGauge(f"gauge not invertible near ({x[k]:.4g}, {y[k]:.4g})", witness=(x[k], y[k]))
        object.__setattr__(self, "boundary_flag", flag)
        object.__setattr__(self, "max_condition", float(np.max(cond)))

    @property
    def n(self) -> int:
        return self.u.shape[0]


def _partial(f, axis: str):
    """First partial of a field as a field."""
    if isinstance(f, PolyField):
        return f.dx() if axis == "x" else f.dy()
    k = 0 if axis == "x" else 1

    def value(x, y):
        return f.grad(x, y)[k]

    def grad(x, y):
        if hasattr(f, "hess"):
            h = f.hess(x, y)
            return h[k][0], h[k][1]
        raise NotImplementedError("second derivatives unavailable for this field")

    return FuncField(value, grad, f.shape)


# ---------------------------------------------------------------------------
# solvers


def _aux_rhs(pair, surface, source=None, sign=1.0):
    """``da/dt = sign * Att a + f`` (f omitted for matrix unknowns)."""

    def rhs(z, a):
        M = pair(surface, z)
        if a.ndim == M.ndim - 1:
            out = np.einsum("...ij,...j->...i", M, a)
        else:
            out = M @ a
        out = sign * out
        if source is not None:
            out = out + source(surface, z)
        return out

    return rhs


def _backward_solve(scenario, pair, s, aux0, source=None):
    """March to the exit, then integrate ``da/dt' = Att a + f`` back to ``s``."""
    surface, lam, num = scenario.surface, scenario.lam, scenario.numerics
    z = np.atleast_2d(as_states(s))
    h, cap = num.step(surface), num.cap(surface)
    ex = march_to_exit(surface, lam, z, h, cap)
    tau = ex.tau
    n_steps = _steps_for(tau, h)
    zb, a, _ = march_fixed(
        surface, lam, ex.z_exit, tau, n_steps, sign=-1.0, aux0=aux0, aux_rhs=_aux_rhs(pair, surface, source)
    )
    return a, tau


def nonabelian_transform(scenario, pair: AttenuationPair, s, *, check=True):
    """Scattering data ``C(s) = U(0)`` for influx states ``s`` (batch allowed)."""
    z = as_states(s)
    flat = z.reshape(-1, 3)
    if check:
        check_boundary_states(scenario.surface, flat, scenario.numerics.eps_glance, influx=True)
    n = pair.n
    aux0 = np.broadcast_to(np.eye(n, dtype=complex), (flat.shape[0], n, n)).copy()
    C, _ = _backward_solve(scenario, pair, flat, aux0)
    return C.reshape(z.shape[:-1] + (n, n))


def attenuated_transform(scenario, pair: AttenuationPair, source: SourceTerm, s, *, check=True):
    """``I(f)(s) = u(0)`` for influx states ``s``."""
    if source.n != pair.n:
        raise DimensionMismatch(f"source dimension {source.n} != attenuation dimension {pair.n}")
    z = as_states(s)
    flat = z.reshape(-1, 3)
    if check:
        check_boundary_states(scenario.surface, flat, scenario.numerics.eps_glance, influx=True)
    aux0 = np.zeros((flat.shape[0], pair.n), dtype=complex)
    u, _ = _backward_solve(scenario, pair, flat, aux0, source)
    return u.reshape(z.shape[:-1] + (pair.n,))


def cocycle(scenario, pair: AttenuationPair, s, t):
    """``C(s, t)`` solving ``dC/dt + Att(phi_t s) C = 0``, ``C(s, 0) = Id``."""
    surface, lam, num = scenario.surface, scenario.lam, scenario.numerics
    z = as_states(s)
    flat = z.reshape(-1, 3)
    N, n = flat.shape[0], pair.n
    t = np.broadcast_to(np.asarray(t, dtype=float), z.shape[:-1]).reshape(-1)
    out = np.broadcast_to(np.eye(n, dtype=complex), (N, n, n)).copy()
    h = num.step(surface)
    for sign in (1.0, -1.0):
        sel = np.flatnonzero(np.sign(t) == sign)
        if sel.size == 0:
            continue
        T = np.abs(t[sel])
        _, C, mr = march_fixed(
            surface, lam, flat[sel], T, _steps_for(T, h), sign=sign,
            aux0=out[sel], aux_rhs=_aux_rhs(pair, surface, sign=-sign),
        )
        if np.any(mr < -1e-9):
            k = sel[int(np.argmin(mr))]
            raise LeftManifold("orbit leaves the disk before time t", witness=PhaseState.from_array(flat[k]))
        out[sel] = C
    return out.reshape(z.shape[:-1] + (n, n))


def integrating_factor(ext, pair: AttenuationPair, s):
    """``R(s) = C(s, tau_0(s))^{-1}`` with ``tau_0`` the exit time of the outer disk."""
    surface, lam, num = ext.surface, ext.lam, ext.numerics
    z = as_states(s)
    flat = z.reshape(-1, 3)
    N, n = flat.shape[0], pair.n
    aux0 = np.broadcast_to(np.eye(n, dtype=complex), (N, n, n)).copy()
    res = march_to_exit(
        surface, lam, flat, num.step(surface), num.cap(surface),
        aux0=aux0, aux_rhs=_aux_rhs(pair, surface, sign=-1.0),
    )
    R = np.linalg.inv(res.aux_exit)
    return R.reshape(z.shape[:-1] + (n, n))


def _simpson_weights(m: int) -> np.ndarray:
    w = np.ones(m + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w / 3.0


def transport_via_integrating_factor(ext, pair: AttenuationPair, source: SourceTerm, s, *, check=True):
    """``u(s) = R(s) int_0^tau (R^{-1} f)(phi_t s) dt`` by composite Simpson.

    The quadrature nodes are RK4 trace nodes of the inner flow; ``R`` is
    evaluated independently at every node by marching to the outer boundary.
    """
    inner = ext.inner
    surface, lam, num = inner.surface, inner.lam, inner.numerics
    z = as_states(s)
    flat = z.reshape(-1, 3)
    if check:
        check_boundary_states(surface, flat, num.eps_glance, influx=True)
    N, n = flat.shape[0], pair.n
    h = num.step(surface)
    tau = march_to_exit(surface, lam, flat, h, num.cap(surface)).tau
    m = num.quad_nodes + (num.quad_nodes % 2)
    sub = max(1, int(np.ceil(np.max(tau) / (m * h))))
    _, _, _, nodes, _ = march_fixed(surface, lam, flat, tau, m * sub, record_every=sub)
    # nodes: (m + 1, N, 3)
    R = integrating_factor(ext, pair, nodes.reshape(-1, 3)).reshape(m + 1, N, n, n)
    f = source(surface, nodes)
    g = np.linalg.solve(R, f[..., None])[..., 0]
    w = _simpson_weights(m)
    integral = np.einsum("k,kni->ni", w, g) * (tau / m)[:, None]
    u = np.einsum("nij,nj->ni", R[0], integral)
    return u.reshape(z.shape[:-1] + (n,))


# ---------------------------------------------------------------------------
# gauges, endomorphisms, kernel elements


def gauge_transform(pair: AttenuationPair, gauge: GaugeElement) -> AttenuationPair:
    """``(A, Phi) . u = (u^{-1} du + u^{-1} A u, u^{-1} Phi u)``."""
    u = gauge.u if isinstance(gauge, GaugeElement) else gauge
    if u.shape != (pair.n, pair.n):
        raise DimensionMismatch(f"gauge shape {u.shape} does not match pair dimension {pair.n}")
    if not isinstance(gauge, GaugeElement):
        GaugeElement(u)
    Ax = InverseTimes(u, field_add(_partial(u, "x"), field_matmul(pair.Ax, u)))
    Ay = InverseTimes(u, field_add(_partial(u, "y"), field_matmul(pair.Ay, u)))
    Phi = InverseTimes(u, field_matmul(pair.Phi, u))
    return AttenuationPair(Ax, Ay, Phi)


def _kron_left(n):
    eye = np.eye(n)

    def fn(M):
        M = np.asarray(M)
        return np.einsum("...ij,kl->...ikjl", M, eye).reshape(M.shape[:-2] + (n * n, n * n))

    return fn


def _kron_right_T(n):
    eye = np.eye(n)

    def fn(M):
        M = np.asarray(M)
        return np.einsum("ij,...lk->...ikjl", eye, M).reshape(M.shape[:-2] + (n * n, n * n))

    return fn


def endomorphism_pair(pairA: AttenuationPair, pairB: AttenuationPair) -> AttenuationPair:
    """Attenuation ``H -> Att_A H - H Att_B`` on row-major flattened ``H``."""
    if pairA.n != pairB.n:
        raise DimensionMismatch(f"pairs have dimensions {pairA.n} and {pairB.n}")
    n = pairA.n
    L, Rt = _kron_left(n), _kron_right_T(n)
    shape = (n * n, n * n)
    comps = [
        field_sub(field_map(getattr(pairA, c), L, shape), field_map(getattr(pairB, c), Rt, shape))
        for c in ("Ax", "Ay", "Phi")
    ]
    return AttenuationPair(*comps)


def difference_source(pairA: AttenuationPair, pairB: AttenuationPair) -> SourceTerm:
    """``Att_A - Att_B`` as a source with values in flattened n x n matrices."""
    n = pairA.n
    flat = lambda M: np.asarray(M).reshape(np.shape(M)[:-2] + (n * n,))  # noqa: E731
    comps = [field_map(field_sub(getattr(pairA, c), getattr(pairB, c)), flat, (n * n,)) for c in ("Phi", "Ax", "Ay")]
    return SourceTerm(*comps)


def pseudolinearization_residual(scenario, pairA: AttenuationPair, pairB: AttenuationPair, fan) -> dict:
    """``max |C_A C_B^{-1} - Id - I_{E(A,B)}(A - B)|_F`` over an influx fan."""
    n = pairA.n
    z = np.atleast_2d(as_states(fan))
    CA = nonabelian_transform(scenario, pairA, z)
    CB = nonabelian_transform(scenario, pairB, z)
    lhs = CA @ np.linalg.inv(CB)
    I = attenuated_transform(scenario, endomorphism_pair(pairA, pairB), difference_source(pairA, pairB), z)
    res = np.linalg.norm(lhs - np.eye(n) - I.reshape(-1, n, n), axis=(-2, -1))
    return {"residual": float(np.max(res)), "per_ray": res}


def kernel_element(pair: AttenuationPair, p, radius: float = 1.0) -> SourceTerm:
    """Source ``f = Phi p + (dp + A p)`` for ``p`` vanishing on the boundary."""
    if p.shape != (pair.n,):
        raise DimensionMismatch(f"p has shape {p.shape}, expected ({pair.n},)")
    bx, by = _boundary_samples(radius)
    worst = float(np.max(np.abs(p(bx, by))))
    if worst > 1e-10:
        raise BoundaryNonzero(f"p does not vanish on the boundary (max {worst:.3e})")
    f0 = field_matmul(pair.Phi, p)
    ax = field_add(_partial(p, "x"), field_matmul(pair.Ax, p))
    ay = field_add(_partial(p, "y"), field_matmul(pair.Ay, p))
    return SourceTerm(f0, ax, ay)


def boundary_vanishing(q: PolyField, radius: float = 1.0) -> PolyField:
    """``rho * q`` with ``rho = radius^2 - x^2 - y^2``."""
    rho = PolyField.from_terms([(0, 0, radius**2), (2, 0, -1.0), (0, 2, -1.0)])
    return q * rho


def gauge_equivalence_witness(scenario, pairA, pairB, gauge: GaugeElement, fan, samples=None) -> dict:
    """Check ``Att_B = u^{-1}(X + lambda V) u + u^{-1} Att_A u`` and ``C_A = C_B``."""
    surface = scenario.surface
    u = gauge.u
    if samples is None:
        rng = np.random.default_rng(scenario.seed)
        r = 0.95 * surface.radius * np.sqrt(rng.uniform(0, 1, 200))
        a = rng.uniform(0, 2 * np.pi, 200)
        samples = np.stack([r * np.cos(a), r * np.sin(a), rng.uniform(0, 2 * np.pi, 200)], axis=-1)
    zz = as_states(samples)
    x, y = zz[..., 0], zz[..., 1]
    uv = u(x, y)
    ux, uy = u.grad(x, y)
    v1, v2 = _unit_v(surface, zz)
    du = ux * v1[..., None, None] + uy * v2[..., None, None]
    rhs = np.linalg.solve(uv, du + pairA(surface, zz) @ uv)
    alg = np.linalg.norm(pairB(surface, zz) - rhs, axis=(-2, -1))
    z = np.atleast_2d(as_states(fan))
    CA = nonabelian_transform(scenario, pairA, z)
    CB = nonabelian_transform(scenario, pairB, z)
    scat = np.linalg.norm(CA - CB, axis=(-2, -1))
    return {
        "algebraic_residual": float(np.max(alg)),
        "scattering_residual": float(np.max(scat)),
        "boundary_flag": gauge.boundary_flag,
    }


def unitarity_defect(C) -> float:
    """``max |C C^* - Id|_F``."""
    C = np.asarray(C)
    n = C.shape[-1]
    return float(np.max(np.linalg.norm(C @ np.conj(np.swapaxes(C, -1, -2)) - np.eye(n), axis=(-2, -1))))
