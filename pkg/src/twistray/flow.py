"""Lambda-geodesic flow on a conformal disk.

The flow is generated by ``X + lambda V``; in chart coordinates

    dx/dt     = exp(-phi) cos(theta)
    dy/dt     = exp(-phi) sin(theta)
    dtheta/dt = exp(-phi) (-phi_x sin(theta) + phi_y cos(theta)) + lambda(x, y, theta)

Integration is fixed-step RK4 over batches of rays; the boundary hit is
located by bisection on the length of the final sub-step until
``|rho| < 1e-12`` where ``rho = radius^2 - x^2 - y^2``.  Any auxiliary
linear ODE (cocycles, transport equations) can be co-integrated with the
base flow through the ``aux`` channel so attenuations are always evaluated
on the discrete trajectory itself.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import CapReached, ExtensionNotConvex, ExtensionTrapped, GlancingRay, LeftManifold
from .fields import PolyField, as_poly
from .geometry import ConformalSurface, PhaseState, as_states, strict_lambda_convexity_report

RHO_TOL = 1e-12
EPS_GLANCE = 1e-3


class LambdaField:
    """``lambda(x, v) = sum_k c_k(x) exp(i k theta)`` for ``|k| <= m``.

    Parameters
    ----------
    modes : dict
        ``{k: c_k}`` with scalar fields (or numbers).  Real-valuedness
        requires ``c_{-k} = conj(c_k)``; use :meth:`real` to build a field
        from its non-negative modes.
    """

    def __init__(self, modes=None):
        modes = {} if modes is None else dict(modes)
        self.modes = {int(k): as_poly(c) for k, c in modes.items()}
        for c in self.modes.values():
            if c.shape != ():
                raise ValueError("lambda modes must be scalar fields")
        self.modes = {k: c for k, c in self.modes.items() if np.any(c.coeffs != 0)}

    @classmethod
    def constant(cls, value: float) -> "LambdaField":
        return cls({0: value})

    @classmethod
    def real(cls, nonneg_modes) -> "LambdaField":
        """Real field from ``{k >= 0: c_k}``; negative modes are conjugates.

        ``{0: a, 1: b}`` gives ``a + b e^{it} + conj(b) e^{-it}``.
        """
        modes = {}
        for k, c in nonneg_modes.items():
            c = as_poly(c)
            k = int(k)
            if k < 0:
                raise ValueError("pass only k >= 0 modes")
            if k == 0:
                modes[0] = PolyField(np.real(c.coeffs))
            else:
                modes[k] = c
                modes[-k] = c.conj()
        return cls(modes)

    @property
    def degree(self) -> int:
        return max((abs(k) for k in self.modes), default=0)

    @property
    def is_magnetic(self) -> bool:
        return self.degree == 0

    @property
    def is_thermostat(self) -> bool:
        return bool(self.modes) and set(self.modes) <= {-1, 1}

    def __call__(self, x, y, theta):
        x, y, theta = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (x, y, theta)))
        out = np.zeros(x.shape, dtype=complex)
        for k, c in self.modes.items():
            out += c(x, y) * np.exp(1j * k * theta)
        return out.real

    def complex_value(self, x, y, theta):
        x, y, theta = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (x, y, theta)))
        out = np.zeros(x.shape, dtype=complex)
        for k, c in self.modes.items():
            out += c(x, y) * np.exp(1j * k * theta)
        return out

    def reality_defect(self, x, y) -> float:
        """``max |c_{-k} - conj(c_k)|`` over the given points."""
        worst = 0.0
        for k, c in self.modes.items():
            other = self.modes.get(-k)
            ov = other(x, y) if other is not None else 0.0
            worst = max(worst, float(np.max(np.abs(ov - np.conj(c(x, y))))))
        return worst

    def reversed(self) -> "LambdaField":
        """Field driving the time-reversed curves: ``-lambda(x, -v)``."""
        return LambdaField({k: c * (-((-1) ** k)) for k, c in self.modes.items()})

    def scaled(self, factor) -> "LambdaField":
        return LambdaField({k: c * factor for k, c in self.modes.items()})

    def __repr__(self):
        return f"LambdaField(modes={sorted(self.modes)})"


# ---------------------------------------------------------------------------
# vector field and RK4 core


def _generator(surface: ConformalSurface, lam: LambdaField, z: np.ndarray, sign: float = 1.0):
    x, y, t = z[..., 0], z[..., 1], z[..., 2]
    p, px, py = surface.phi(x, y), *surface._d1
    px, py = px(x, y), py(x, y)
    E = np.exp(-p)
    c, s = np.cos(t), np.sin(t)
    out = np.empty_like(z)
    out[..., 0] = E * c
    out[..., 1] = E * s
    out[..., 2] = E * (-px * s + py * c) + lam(x, y, t)
    if sign != 1.0:
        out *= sign
    return out


def generator_rhs(scenario, s):
    """``(dx/dt, dy/dt, dtheta/dt)`` of ``X + lambda V`` at ``s``."""
    return _generator(scenario.surface, scenario.lam, as_states(s))


AuxRHS = Callable[[np.ndarray, np.ndarray], np.ndarray]


def _bcast(h, a):
    return np.reshape(h, h.shape + (1,) * (a.ndim - h.ndim))


def _rk4_step(surface, lam, sign, aux_rhs, z, a, h):
    def f(z, a):
        dz = _generator(surface, lam, z, sign)
        da = aux_rhs(z, a) if aux_rhs is not None else None
        return dz, da

    hz = _bcast(h, z)
    k1z, k1a = f(z, a)
    if aux_rhs is None:
        k2z, _ = f(z + 0.5 * hz * k1z, None)
        k3z, _ = f(z + 0.5 * hz * k2z, None)
        k4z, _ = f(z + hz * k3z, None)
        return z + hz / 6.0 * (k1z + 2 * k2z + 2 * k3z + k4z), None
    ha = _bcast(h, a)
    k2z, k2a = f(z + 0.5 * hz * k1z, a + 0.5 * ha * k1a)
    k3z, k3a = f(z + 0.5 * hz * k2z, a + 0.5 * ha * k2a)
    k4z, k4a = f(z + hz * k3z, a + ha * k3a)
    return (
        z + hz / 6.0 * (k1z + 2 * k2z + 2 * k3z + k4z),
        a + ha / 6.0 * (k1a + 2 * k2a + 2 * k3a + k4a),
    )


def _batch_aux(aux0, n):
    # aux arrays are always batched along axis 0
    if aux0 is None:
        return None
    a = np.array(aux0, dtype=complex)
    if a.ndim == 0 or a.shape[0] != n:
        raise ValueError(f"aux0 must have leading batch axis of length {n}, got {a.shape}")
    return a


def _rho(surface, z):
    return surface.radius**2 - z[..., 0] ** 2 - z[..., 1] ** 2


def _rho_dot(surface, lam, z, sign):
    g = _generator(surface, lam, z, sign)
    return -2.0 * (z[..., 0] * g[..., 0] + z[..., 1] * g[..., 1])


@dataclass
class ExitResult:
    """Batch result of marching to the boundary."""

    tau: np.ndarray  # exit time per ray
    z_exit: np.ndarray  # exit states (N, 3)
    aux_exit: np.ndarray | None
    exited: np.ndarray  # bool
    t_rec: list | None = None
    z_rec: list | None = None


def march_to_exit(
    surface: ConformalSurface,
    lam: LambdaField,
    z0,
    h: float,
    t_max: float,
    *,
    sign: float = 1.0,
    aux0=None,
    aux_rhs: AuxRHS | None = None,
    record: bool = False,
    raise_on_cap: bool = True,
) -> ExitResult:
    """Integrate a batch of states until each leaves the disk.

    ``sign=-1`` integrates the reversed generator ``-(X + lambda V)``.  States
    already on the boundary and pointing outward exit at time 0.
    """
    z = np.array(np.atleast_2d(as_states(z0)), dtype=float)
    n = z.shape[0]
    a = _batch_aux(aux0, n)
    rho0 = _rho(surface, z)
    if np.any(rho0 < -1e-9):
        k = int(np.argmin(rho0))
        raise LeftManifold("initial state outside the disk", witness=PhaseState.from_array(z[k]))
    tau = np.zeros(n)
    done = np.zeros(n, dtype=bool)
    on_bdry = np.abs(rho0) <= 1e-10
    if np.any(on_bdry):
        outward = on_bdry & (_rho_dot(surface, lam, z, sign) <= 0.0)
        done |= outward
    z_exit = z.copy()
    a_exit = None if a is None else a.copy()
    t = 0.0
    t_rec = [0.0] if record else None
    z_rec = [z.copy()] if record else None
    # last in-disk state of every crossed ray; event location is deferred
    # so all crossings are bisected in one vectorized pass
    pre_z = np.zeros_like(z)
    pre_a = None if a is None else np.zeros_like(a)
    pre_t = np.zeros(n)
    crossed = np.zeros(n, dtype=bool)
    active = np.flatnonzero(~done)
    while active.size and t < t_max:
        za = z[active]
        aa = None if a is None else a[active]
        zn, an = _rk4_step(surface, lam, sign, aux_rhs, za, aa, np.full(active.size, h))
        cross = _rho(surface, zn) < 0.0
        if np.any(cross):
            gi = active[cross]
            pre_z[gi] = za[cross]
            if a is not None:
                pre_a[gi] = aa[cross]
            pre_t[gi] = t
            crossed[gi] = True
            done[gi] = True
        z[active] = zn
        if a is not None:
            a[active] = an
        t += h
        if record:
            t_rec.append(t)
            z_rec.append(z.copy())
        active = np.flatnonzero(~done)
    ci = np.flatnonzero(crossed)
    if ci.size:
        zc = pre_z[ci]
        ac = None if a is None else pre_a[ci]
        lo = np.zeros(ci.size)
        hi = np.full(ci.size, h)
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            zm, am = _rk4_step(surface, lam, sign, aux_rhs, zc, ac, mid)
            rm = _rho(surface, zm)
            inside = rm >= 0.0
            lo = np.where(inside, mid, lo)
            hi = np.where(inside, hi, mid)
            if np.all(np.abs(rm) < RHO_TOL) or np.all(hi - lo < 1e-17):
                break
        tau[ci] = pre_t[ci] + mid
        z_exit[ci] = zm
        if a is not None:
            a_exit[ci] = am
    if active.size:
        if raise_on_cap:
            raise CapReached(
                f"{active.size} ray(s) still inside after t_max={t_max}",
                witness=PhaseState.from_array(as_states(z0).reshape(-1, 3)[active[0]]),
            )
        tau[active] = np.inf
        z_exit[active] = z[active]
        if a is not None:
            a_exit[active] = a[active]
    return ExitResult(tau, z_exit, a_exit, done, t_rec, z_rec)


def march_fixed(
    surface: ConformalSurface,
    lam: LambdaField,
    z0,
    T,
    n_steps: int,
    *,
    sign: float = 1.0,
    aux0=None,
    aux_rhs: AuxRHS | None = None,
    record_every: int | None = None,
):
    """Integrate each ray for its own time ``T[i]`` in ``n_steps`` equal steps.

    Returns ``(z, aux, min_rho)`` or, with ``record_every``, additionally the
    recorded node states of shape (n_nodes, N, 3) and aux values.
    """
    z = np.array(np.atleast_2d(as_states(z0)), dtype=float)
    n = z.shape[0]
    T = np.broadcast_to(np.asarray(T, dtype=float), (n,))
    h = T / n_steps
    a = _batch_aux(aux0, n)
    min_rho = _rho(surface, z)
    zs, as_ = ([z.copy()], [None if a is None else a.copy()]) if record_every else (None, None)
    for k in range(n_steps):
        z, a = _rk4_step(surface, lam, sign, aux_rhs, z, a, h)
        min_rho = np.minimum(min_rho, _rho(surface, z))
        if record_every and (k + 1) % record_every == 0:
            zs.append(z.copy())
            as_.append(None if a is None else a.copy())
    if record_every:
        return z, a, min_rho, np.stack(zs), (None if a is None else np.stack(as_))
    return z, a, min_rho


def _steps_for(T, h):
    return max(1, int(np.ceil(np.max(np.abs(T)) / h - 1e-9)))


def flow_states(scenario, s, t, *, check_domain: bool = False):
    """``phi_t(s)`` (negative ``t`` flows backward)."""
    z = np.atleast_2d(as_states(s))
    t = np.broadcast_to(np.asarray(t, dtype=float), z.shape[:1])
    h = scenario.numerics.step(scenario.surface)
    out = z.copy()
    for sign in (1.0, -1.0):
        sel = np.flatnonzero(np.sign(t) == sign)
        if sel.size == 0:
            continue
        T = np.abs(t[sel])
        zz, _, mr = march_fixed(scenario.surface, scenario.lam, z[sel], T, _steps_for(T, h), sign=sign)
        if check_domain and np.any(mr < -1e-9):
            raise LeftManifold("orbit left the disk", witness=PhaseState.from_array(z[sel][np.argmin(mr)]))
        out[sel] = zz
    return out.reshape(np.shape(as_states(s)))


# ---------------------------------------------------------------------------
# traces, exit times, scattering


@dataclass
class CurveTrace:
    t: np.ndarray
    states: np.ndarray  # (M, 3)
    exit: str  # "tau_plus", "tau_minus" or "capped"
    tau_plus: float
    tau_minus: float

    @property
    def terminal(self) -> PhaseState:
        return PhaseState.from_array(self.states[-1])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x", "y", "theta"])
            for t, z in zip(self.t, self.states):
                w.writerow([repr(float(t))] + [repr(float(v)) for v in z])


def integrate_flow(scenario, s0, t_max: float | None = None, h: float | None = None,
                   direction: int = +1, raise_on_cap: bool = True) -> CurveTrace:
    """Fixed-step RK4 trace of one lambda-geodesic up to its exit.

    ``direction=-1`` traces the backward orbit (exit flag ``tau_minus``).
    """
    surface, lam = scenario.surface, scenario.lam
    h = scenario.numerics.step(surface) if h is None else h
    t_max = scenario.numerics.cap(surface) if t_max is None else t_max
    z0 = as_states(s0).reshape(1, 3)
    sign = float(direction)
    res = march_to_exit(surface, lam, z0, h, t_max, sign=sign, record=True, raise_on_cap=raise_on_cap)
    other = march_to_exit(surface, lam, z0, h, t_max, sign=-sign, raise_on_cap=False)
    ts = [t for t in res.t_rec if t < res.tau[0]]
    zs = [zz[0] for t, zz in zip(res.t_rec, res.z_rec) if t < res.tau[0]]
    if res.exited[0]:
        ts.append(res.tau[0])
        zs.append(res.z_exit[0])
        flag = "tau_plus" if direction > 0 else "tau_minus"
    else:
        flag = "capped"
    fwd, bwd = float(res.tau[0]), float(other.tau[0])
    if direction < 0:
        fwd, bwd = bwd, fwd
        ts = [-t for t in ts]
    return CurveTrace(np.array(ts), np.array(zs), flag, fwd, bwd)


def exit_times(scenario, s, *, raise_on_cap: bool = True):
    """Forward and backward exit times ``(tau_plus, tau_minus)``."""
    surface, lam = scenario.surface, scenario.lam
    h, cap = scenario.numerics.step(surface), scenario.numerics.cap(surface)
    z = as_states(s)
    flat = z.reshape(-1, 3)
    tp = march_to_exit(surface, lam, flat, h, cap, sign=1.0, raise_on_cap=raise_on_cap).tau
    tm = march_to_exit(surface, lam, flat, h, cap, sign=-1.0, raise_on_cap=raise_on_cap).tau
    shape = z.shape[:-1]
    if shape == ():
        return float(tp[0]), float(tm[0])
    return tp.reshape(shape), tm.reshape(shape)


def tau_tilde(scenario, s):
    tp, tm = exit_times(scenario, s)
    return np.asarray(tp) - np.asarray(tm)


def normal_component(surface: ConformalSurface, s) -> np.ndarray:
    """``<v, nu>_g`` at boundary states (cosine of the angle to the inward normal)."""
    z = as_states(s)
    x, y, t = z[..., 0], z[..., 1], z[..., 2]
    r = np.hypot(x, y)
    return -(np.cos(t) * x + np.sin(t) * y) / r


def check_boundary_states(surface, s, eps_glance=EPS_GLANCE, influx: bool | None = None):
    z = np.atleast_2d(as_states(s))
    off = np.abs(np.hypot(z[:, 0], z[:, 1]) - surface.radius)
    if np.any(off > 1e-9):
        k = int(np.argmax(off))
        raise ValueError(f"state {k} is not on the boundary (off by {off[k]:.2e})")
    nv = normal_component(surface, z)
    bad = np.abs(nv) <= eps_glance
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        raise GlancingRay(f"|<v,nu>| = {abs(nv[k]):.2e} <= {eps_glance}", witness=PhaseState.from_array(z[k]))
    if influx is True and np.any(nv < 0):
        k = int(np.flatnonzero(nv < 0)[0])
        raise ValueError(f"state {k} is not in the influx boundary")
    return nv


def scattering_relation(scenario, s, eps_glance: float | None = None):
    """``alpha(s) = phi_{tau_tilde}(s)`` for non-glancing boundary states."""
    surface, lam = scenario.surface, scenario.lam
    eps = scenario.numerics.eps_glance if eps_glance is None else eps_glance
    z = np.atleast_2d(as_states(s))
    nv = check_boundary_states(surface, z, eps)
    h, cap = scenario.numerics.step(surface), scenario.numerics.cap(surface)
    out = np.empty_like(z)
    for sign, sel in ((1.0, nv > 0), (-1.0, nv < 0)):
        idx = np.flatnonzero(sel)
        if idx.size:
            out[idx] = march_to_exit(surface, lam, z[idx], h, cap, sign=sign).z_exit
    out[:, 2] = np.mod(out[:, 2], 2 * np.pi)
    return out.reshape(np.shape(as_states(s)))


def nontrapping_certificate(scenario, fan, h_fd: float = 1e-3) -> dict:
    """Finite-difference check that ``(X + lambda V)(-tau_tilde) = 2``."""
    z = np.atleast_2d(as_states(fan))
    zp = flow_states(scenario, z, h_fd)
    zm = flow_states(scenario, z, -h_fd)
    tt_p = tau_tilde(scenario, zp)
    tt_m = tau_tilde(scenario, zm)
    values = (-tt_p + tt_m) / (2 * h_fd)
    dev = np.abs(values - 2.0)
    return {
        "values": values,
        "max_deviation": float(np.max(dev)),
        "witness": PhaseState.from_array(z[int(np.argmax(dev))]),
    }


# ---------------------------------------------------------------------------
# fans of states


def boundary_fan(surface: ConformalSurface, n_beta: int, n_dir: int, eps_glance: float = EPS_GLANCE):
    """Regular influx fan: ``n_beta`` boundary angles times ``n_dir`` directions.

    Returns ``(states, beta, alpha)`` with ``alpha`` the angle from the
    inward normal, so ``theta = beta + pi + alpha``.  Directions with
    ``cos(alpha) <= eps_glance`` are excluded.
    """
    beta = 2 * np.pi * np.arange(n_beta) / n_beta
    alpha = -np.pi / 2 + np.pi * (np.arange(n_dir) + 0.5) / n_dir
    alpha = alpha[np.cos(alpha) > eps_glance]
    B, A = np.meshgrid(beta, alpha, indexing="ij")
    B, A = B.ravel(), A.ravel()
    r = surface.radius
    states = np.stack([r * np.cos(B), r * np.sin(B), np.mod(B + np.pi + A, 2 * np.pi)], axis=-1)
    return states, B, A


def random_boundary_fan(surface: ConformalSurface, n: int, rng=None, eps_glance: float = 0.05):
    rng = np.random.default_rng(rng)
    beta = rng.uniform(0, 2 * np.pi, n)
    lim = np.arccos(eps_glance)
    alpha = rng.uniform(-lim, lim, n)
    r = surface.radius
    states = np.stack([r * np.cos(beta), r * np.sin(beta), np.mod(beta + np.pi + alpha, 2 * np.pi)], axis=-1)
    return states, beta, alpha


def random_interior_states(surface: ConformalSurface, n: int, rng=None, max_frac: float = 0.9):
    rng = np.random.default_rng(rng)
    r = surface.radius * max_frac * np.sqrt(rng.uniform(0, 1, n))
    a = rng.uniform(0, 2 * np.pi, n)
    th = rng.uniform(0, 2 * np.pi, n)
    return np.stack([r * np.cos(a), r * np.sin(a), th], axis=-1)


# ---------------------------------------------------------------------------
# extensions


@dataclass
class ExtendedScenario:
    """A scenario together with a certified larger disk engulfing it."""

    inner: object
    outer: object
    delta: float
    certification: dict = field(default_factory=dict)

    @property
    def surface(self):
        return self.outer.surface

    @property
    def lam(self):
        return self.outer.lam

    @property
    def numerics(self):
        return self.outer.numerics


def extend_scenario(scenario, delta: float | None = None, time_cap: float | None = None,
                    n_probe: int = 256) -> ExtendedScenario:
    """Enlarge the disk to ``radius * (1 + delta)`` and certify it.

    Polynomial fields extend verbatim; the outer disk must be strictly
    lambda-convex on a boundary sample and every probe ray must exit before
    ``time_cap``.
    """
    delta = scenario.numerics.delta if delta is None else delta
    if not 0 < delta <= 1:
        raise ValueError("delta must lie in (0, 1]")
    outer_surface = scenario.surface.with_radius(scenario.surface.radius * (1 + delta))
    outer = scenario.with_surface(outer_surface)
    conv = strict_lambda_convexity_report(outer_surface, scenario.lam, n_boundary=max(64, n_probe // 4))
    if not conv["margin"] > 0:
        raise ExtensionNotConvex(
            f"outer disk not strictly lambda-convex (margin {conv['margin']:.4g})", witness=conv["witness"]
        )
    cap = outer.numerics.cap(outer_surface) if time_cap is None else time_cap
    n_beta = max(4, int(np.sqrt(n_probe)))
    probes, _, _ = boundary_fan(outer_surface, n_beta, max(2, n_probe // n_beta))
    res = march_to_exit(outer_surface, scenario.lam, probes, outer.numerics.step(outer_surface), cap,
                        raise_on_cap=False)
    if not np.all(res.exited):
        k = int(np.flatnonzero(~res.exited)[0])
        raise ExtensionTrapped("probe ray did not exit before the time cap", witness=PhaseState.from_array(probes[k]))
    cert = {
        "convexity_margin": conv["margin"],
        "convexity_witness": conv["witness"],
        "n_probe": int(probes.shape[0]),
        "max_probe_exit_time": float(np.max(res.tau)),
        "time_cap": float(cap),
    }
    return ExtendedScenario(scenario, outer, delta, cert)
