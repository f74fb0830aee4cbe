"""Fiberwise factorization of matrix loops.

On each fiber the integrating factor ``R(x, .)`` is a loop in GL(n, C).  We
split it as ``R = F U`` where ``F`` extends holomorphically (with holomorphic
inverse) into the unit disk and ``U`` is unitary.  ``F`` is the spectral
factor of ``S = R R^*`` (so ``F F^* = S`` and ``U = F^{-1} R`` is unitary),
computed by Wilson's Newton iteration

    psi <- psi [psi^{-1} S psi^{-*} + I]_+

where ``[.]_+`` keeps positive Fourier modes and half of mode 0.  The
constant unitary ambiguity is removed by making ``F_0`` Hermitian positive
definite.

From a factorization over a neighbourhood of a base point we form the
attenuation ``B = -((X + lambda V) U) U^{-1}`` which must be skew-Hermitian
with modes in ``|k| <= 1`` when ``deg lambda = 0`` and the pair has
degree one.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import AliasingSuspected, NoConvergence, NotPositiveDefinite, StepTooLarge
from .flow import flow_states
from .transport import integrating_factor

MAX_ITER = 200
NEWTON_TOL = 1e-10
MAX_GRID = 8192
RESOLVED = 1e-20  # relative energy treated as numerically absent
FIBERWISE_NOTE = ("F is normalized fiber by fiber (positive definite zero mode); "
                  "agreement with a single smooth F over the whole bundle is not checked")


def _theta_grid(N: int) -> np.ndarray:
    return 2 * np.pi * np.arange(N) / N


def _H(M):
    return np.conj(np.swapaxes(M, -1, -2))


@dataclass(frozen=True)
class MatrixLoop:
    """Truncated Fourier series ``sum_{|k| <= K} c_k exp(i k theta)`` of n x n matrices.

    ``coeffs[k + K]`` holds ``c_k``.
    """

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.ndim != 3 or c.shape[0] % 2 != 1 or c.shape[1] != c.shape[2]:
            raise ValueError(f"coeffs must have shape (2K+1, n, n), got {c.shape}")
        object.__setattr__(self, "coeffs", c)

    @property
    def K(self) -> int:
        return (self.coeffs.shape[0] - 1) // 2

    @property
    def n(self) -> int:
        return self.coeffs.shape[1]

    @classmethod
    def constant(cls, M, K: int = 0) -> "MatrixLoop":
        M = np.asarray(M, dtype=complex)
        c = np.zeros((2 * K + 1,) + M.shape, dtype=complex)
        c[K] = M
        return cls(c)

    @classmethod
    def from_modes(cls, modes: dict, K: int | None = None) -> "MatrixLoop":
        K = max(abs(k) for k in modes) if K is None else K
        n = np.asarray(next(iter(modes.values()))).shape[-1]
        c = np.zeros((2 * K + 1, n, n), dtype=complex)
        for k, v in modes.items():
            if abs(k) <= K:
                c[k + K] = v
        return cls(c)

    @classmethod
    def from_samples(cls, samples, K: int) -> "MatrixLoop":
        """Fourier coefficients of samples on the uniform grid of size N > 2K."""
        s = np.asarray(samples, dtype=complex)
        N = s.shape[0]
        if N <= 2 * K:
            raise ValueError(f"{N} samples cannot resolve {2 * K + 1} modes")
        c = np.fft.fft(s, axis=0) / N
        k = np.arange(-K, K + 1)
        return cls(c[k % N])

    def modes(self) -> dict:
        return {k: self.coeffs[k + self.K] for k in range(-self.K, self.K + 1)}

    def __call__(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        k = np.arange(-self.K, self.K + 1)
        ph = np.exp(1j * theta[..., None] * k)
        return np.einsum("...k,kij->...ij", ph, self.coeffs)

    def samples(self, N: int) -> np.ndarray:
        """Values on the grid ``theta_j = 2 pi j / N`` (N > 2K), via FFT."""
        if N <= 2 * self.K:
            return self(_theta_grid(N))
        buf = np.zeros((N, self.n, self.n), dtype=complex)
        k = np.arange(-self.K, self.K + 1)
        buf[k % N] = self.coeffs
        return np.fft.ifft(buf, axis=0) * N

    def energy(self) -> np.ndarray:
        return np.sum(np.abs(self.coeffs) ** 2, axis=(1, 2))

    def negative_energy(self) -> float:
        return float(self.energy()[: self.K].sum())

    def energy_beyond(self, K: int) -> float:
        """Energy share of modes with ``|k| > K``."""
        e = self.energy()
        tot = e.sum()
        return float(e[np.abs(np.arange(-self.K, self.K + 1)) > K].sum() / tot) if tot > 0 else 0.0

    def truncated(self, K: int) -> "MatrixLoop":
        if K >= self.K:
            return self
        return MatrixLoop(self.coeffs[self.K - K : self.K + K + 1])

    def tail_fraction(self) -> float:
        """Energy share of the top quarter of retained modes."""
        e = self.energy()
        k = np.abs(np.arange(-self.K, self.K + 1))
        tot = e.sum()
        return float(e[k > 3 * self.K / 4].sum() / tot) if tot > 0 else 0.0

    def check(self, N: int = 256, det_floor: float = 1e-10, tail: float = 1e-8) -> None:
        """Enforce grid invertibility and a decaying spectrum."""
        d = np.abs(np.linalg.det(self.samples(max(N, 2 * self.K + 2))))
        if np.min(d) <= det_floor:
            raise ValueError(f"loop is not invertible on the grid (min |det| = {np.min(d):.3e})")
        if self.tail_fraction() > tail:
            raise AliasingSuspected(f"loop tail energy fraction {self.tail_fraction():.2e} exceeds {tail:g}")

    def derivative(self) -> "MatrixLoop":
        """``d/dtheta`` of the loop."""
        k = np.arange(-self.K, self.K + 1)
        return MatrixLoop(self.coeffs * (1j * k)[:, None, None])

    def to_json_obj(self) -> dict:
        return {
            "K": self.K,
            "modes": {
                str(k): np.stack([c.real, c.imag], axis=-1).tolist() for k, c in self.modes().items()
            },
        }


# ---------------------------------------------------------------------------
# spectral factorization


def _plus(g, N):
    """Positive-mode part with half of mode 0, on the grid."""
    c = np.fft.fft(g, axis=0)
    c[0] *= 0.5
    c[N // 2 :] = 0.0
    return np.fft.ifft(c, axis=0)


def _grid_size(N_theta: int, K: int) -> int:
    N = max(N_theta, 4)
    while N < 2 * (2 * K + 1):
        N *= 2
    return N


def _normalize(F_grid):
    """Right-multiply by the constant unitary making mode 0 Hermitian positive definite."""
    W, _ = scipy.linalg.polar(F_grid.mean(axis=0), side="left")  # F_0 = P W
    return F_grid @ _H(W)


def wilson_factor(S_grid, *, F_init=None, max_iter=MAX_ITER, tol=NEWTON_TOL):
    """Newton iteration for ``F F^* = S`` on a uniform theta-grid.

    Returns ``(F_grid, iterations)``; ``F`` has only non-negative modes.
    """
    S = np.asarray(S_grid, dtype=complex)
    N, n, _ = S.shape
    S = 0.5 * (S + _H(S))
    ev = np.linalg.eigvalsh(S)
    if np.min(ev) <= 1e-8:
        j = int(np.argmin(np.min(ev, axis=-1)))
        raise NotPositiveDefinite(
            f"S is not positive definite at theta = {2 * np.pi * j / N:.4f} (min eigenvalue {np.min(ev):.3e})",
            witness=j,
        )
    if F_init is None:
        psi = np.broadcast_to(np.linalg.cholesky(S.mean(axis=0)), S.shape).copy()
    else:
        psi = np.asarray(F_init, dtype=complex).copy()
    eye = np.eye(n)
    for it in range(1, max_iter + 1):
        inv = np.linalg.inv(psi)
        g = inv @ S @ _H(inv) + eye
        new = psi @ _plus(g, N)
        step = float(np.max(np.abs(new - psi))) / max(1.0, float(np.max(np.abs(new))))
        psi = new
        if step < tol:
            return psi, it
    raise NoConvergence(f"spectral factorization did not converge in {max_iter} iterations (last update {step:.2e})")


def spectral_factor(S: "MatrixLoop | np.ndarray", N_theta: int = 256, K_trunc: int = 64, *, F_init=None) -> MatrixLoop:
    """Holomorphic, outer ``F`` with ``F F^* = S`` and Hermitian positive definite ``F_0``.

    ``S`` is a Hermitian positive definite :class:`MatrixLoop` or an array of
    grid samples of shape (N, n, n).
    """
    if isinstance(S, MatrixLoop):
        N = _grid_size(N_theta, S.K)
        S_grid = S.samples(N)
    else:
        S_grid = np.asarray(S, dtype=complex)
        N = S_grid.shape[0]
    F_grid, _ = wilson_factor(S_grid, F_init=F_init)
    F_grid = _normalize(F_grid)
    c = np.fft.fft(F_grid, axis=0) / N
    K = min(K_trunc, N // 2 - 1)
    coeffs = np.zeros((2 * K + 1,) + c.shape[1:], dtype=complex)
    coeffs[K:] = c[: K + 1]
    return MatrixLoop(coeffs)


def scalar_outer_factor(S_samples, K: int) -> MatrixLoop:
    """Scalar spectral factor ``exp([log S]_+)`` (half of mode 0), as a 1 x 1 loop."""
    s = np.asarray(S_samples, dtype=float)
    N = s.shape[0]
    F = np.exp(_plus(np.log(s).astype(complex), N))
    c = np.fft.fft(F) / N
    coeffs = np.zeros((2 * K + 1, 1, 1), dtype=complex)
    coeffs[K:, 0, 0] = c[: K + 1]
    return MatrixLoop(coeffs)


def winding_number(values) -> int:
    """Winding of a closed sampled curve in C around 0."""
    v = np.asarray(values, dtype=complex)
    d = np.angle(np.roll(v, -1) / v)
    return int(np.rint(d.sum() / (2 * np.pi)))


@dataclass(frozen=True)
class IwasawaFactors:
    F: MatrixLoop
    U: MatrixLoop
    diagnostics: dict = field(default_factory=dict)

    def passes(self, holo=1e-9, unit=1e-8, recon=1e-7) -> bool:
        d = self.diagnostics
        return (
            d["holomorphy"] < holo
            and d["unitarity"] < unit
            and d["reconstruction"] < recon
            and d["det_winding"] == 0
        )

    def to_json(self) -> str:
        obj = {"F": self.F.to_json_obj(), "U": self.U.to_json_obj(), "diagnostics": self.diagnostics}
        return json.dumps(obj, sort_keys=True, indent=2)


def iwasawa_factorize(R: MatrixLoop, N_theta: int = 256, K_trunc: int | None = None, *, F_init=None) -> IwasawaFactors:
    """``R = F U`` with ``F = spectral_factor(R R^*)`` and ``U = F^{-1} R``.

    The grid is doubled (up to ``MAX_GRID``) until both factors are resolved;
    factors are stored with ``K_trunc`` modes unless their spectrum extends
    further, in which case every resolved mode is kept.
    """
    K = R.K if K_trunc is None else K_trunc
    N = _grid_size(N_theta, max(K, R.K))
    while True:
        R_grid = R.samples(N)
        S_grid = R_grid @ _H(R_grid)
        init = F_init if F_init is not None and np.shape(F_init)[0] == N else None
        F = spectral_factor(S_grid, N, N // 2 - 1, F_init=init)
        F_grid = F.samples(N)
        Finv_grid = np.linalg.inv(F_grid)
        U = MatrixLoop.from_samples(Finv_grid @ R_grid, N // 2 - 1)
        if max(F.tail_fraction(), U.tail_fraction()) < RESOLVED or N >= MAX_GRID:
            break
        N *= 2
    if F.energy_beyond(K) < RESOLVED and U.energy_beyond(K) < RESOLVED:
        F, U = F.truncated(K), U.truncated(K)
    F_grid, U_grid = F.samples(N), U.samples(N)
    Finv = MatrixLoop.from_samples(np.linalg.inv(F_grid), N // 2 - 1)
    eye = np.eye(R.n)
    diag = {
        "holomorphy": float(np.sqrt(F.negative_energy() + Finv.negative_energy())),
        "unitarity": float(np.max(np.linalg.norm(U_grid @ _H(U_grid) - eye, axis=(-2, -1)))),
        "reconstruction": float(np.max(np.linalg.norm(F_grid @ U_grid - R_grid, axis=(-2, -1)))),
        "det_winding": winding_number(np.linalg.det(F_grid)),
        "det_U_modulus_defect": float(np.max(np.abs(np.abs(np.linalg.det(U_grid)) - 1.0))),
        "spectral_residual": float(np.max(np.linalg.norm(F_grid @ _H(F_grid) - S_grid, axis=(-2, -1)))),
        "grid": N,
        "modes_kept": F.K,
    }
    return IwasawaFactors(F, U, diag)


def antiholomorphic_factorize(R: MatrixLoop, **kw) -> IwasawaFactors:
    """``R = F U`` with ``F`` antiholomorphic, via ``theta -> -theta``."""
    flip = lambda L: MatrixLoop(L.coeffs[::-1])  # noqa: E731
    fac = iwasawa_factorize(flip(R), **kw)
    return IwasawaFactors(flip(fac.F), flip(fac.U), fac.diagnostics)


# ---------------------------------------------------------------------------
# loops of integrating factors and the derived attenuation


def fiber_states(x, y, N_theta: int) -> np.ndarray:
    """States ``(x, y, theta_j)`` for every base point; shape (M, N, 3)."""
    x, y = np.atleast_1d(np.asarray(x, dtype=float)), np.atleast_1d(np.asarray(y, dtype=float))
    th = _theta_grid(N_theta)
    X = np.broadcast_to(x[:, None], (x.size, N_theta))
    Y = np.broadcast_to(y[:, None], (y.size, N_theta))
    T = np.broadcast_to(th, (x.size, N_theta))
    return np.stack([X, Y, T], axis=-1)


def integrating_factor_loops(ext, pair, x, y, N_theta: int | None = None, K_trunc: int | None = None, *, check=True):
    """``R(x_i, .)`` sampled on N_theta fiber angles and truncated to K_trunc modes."""
    num = ext.numerics
    N = num.N_theta if N_theta is None else N_theta
    K = min(num.K_trunc if K_trunc is None else K_trunc, N // 2 - 1)
    z = fiber_states(x, y, N)
    rho = ext.inner.surface.rho(z[..., 0, 0], z[..., 0, 1])
    if np.any(rho <= 0):
        raise ValueError("base points must lie in the interior of the disk")
    R = integrating_factor(ext, pair, z.reshape(-1, 3)).reshape(z.shape[:2] + (pair.n, pair.n))
    loops = [MatrixLoop.from_samples(R[i], K) for i in range(R.shape[0])]
    if check:
        for L in loops:
            L.check(N)
    return loops


def _unitary_factors(ext, pair, x, y, N, K):
    loops = integrating_factor_loops(ext, pair, x, y, N, K)
    return [iwasawa_factorize(L, N, K) for L in loops]


@dataclass(frozen=True)
class DerivedAttenuation:
    """``B = -((X + lambda V) U) U^{-1}`` on one fiber."""

    point: tuple
    samples: np.ndarray  # (N_theta, n, n)
    modes: dict
    h_fd: float
    richardson_change: float
    factor_diagnostics: dict


def _B_chain(ext, pair, x0, y0, h, N, K):
    """Chain-rule form: spatial central differences of U plus a spectral theta-derivative."""
    xs = np.array([x0, x0 + h, x0 - h, x0, x0])
    ys = np.array([y0, y0, y0, y0 + h, y0 - h])
    facs = _unitary_factors(ext, pair, xs, ys, N, K)
    U = [f.U.samples(N) for f in facs]
    Ux = (U[1] - U[2]) / (2 * h)
    Uy = (U[3] - U[4]) / (2 * h)
    Ut = facs[0].U.derivative().samples(N)
    surf, lam = ext.inner.surface, ext.inner.lam
    th = _theta_grid(N)
    phi, px, py = surf.phi(x0, y0), *surf.phi.grad(x0, y0)
    e = np.exp(-phi)
    c, s = np.cos(th), np.sin(th)
    a_th = e * (-px * s + py * c) + lam(x0, y0, th)
    XU = (e * c)[:, None, None] * Ux + (e * s)[:, None, None] * Uy + a_th[:, None, None] * Ut
    B = -XU @ np.linalg.inv(U[0])
    return B, facs[0].diagnostics


def _B_flow(ext, pair, x0, y0, h, N, K):
    """Literal form: U at the flow-displaced fiber states, differenced in time."""
    inner = ext.inner
    z = fiber_states(x0, y0, N)[0]
    base = _unitary_factors(ext, pair, [x0], [y0], N, K)[0]
    U0 = base.U.samples(N)
    vals = []
    for t in (h, -h):
        zt = flow_states(inner, z, t)
        facs = _unitary_factors(ext, pair, zt[:, 0], zt[:, 1], N, K)
        vals.append(np.stack([f.U(zt[j, 2]) for j, f in enumerate(facs)]))
    dU = (vals[0] - vals[1]) / (2 * h)
    return -dU @ np.linalg.inv(U0), base.diagnostics


def derived_attenuation_B(ext, pair, point, h_fd: float | None = None, *, method: str = "chain",
                          N_theta: int | None = None, K_trunc: int | None = None, richardson: bool = True):
    """Attenuation ``B = -((X + lambda V) U) U^{-1}`` from the fiberwise factorization.

    ``method='chain'`` differentiates ``U`` along the generator by the chain
    rule (spatial central differences plus an exact theta-derivative);
    ``method='flow'`` differences ``U`` at the flowed states ``phi_{+-h}(s)``
    and needs ``2 N_theta`` extra factorizations.  Both agree to ``O(h^2)``.

    Raises
    ------
    StepTooLarge
        If halving ``h_fd`` changes ``B`` by more than 10%.
    """
    num = ext.numerics
    h = num.h_fd if h_fd is None else h_fd
    N = num.N_theta if N_theta is None else N_theta
    K = min(num.K_trunc if K_trunc is None else K_trunc, N // 2 - 1)
    x0, y0 = float(point[0]), float(point[1])
    fn = {"chain": _B_chain, "flow": _B_flow}[method]
    B, diag = fn(ext, pair, x0, y0, h, N, K)
    change = 0.0
    if richardson:
        B2, _ = fn(ext, pair, x0, y0, h / 2, N, K)
        scale = float(np.max(np.linalg.norm(B2, axis=(-2, -1))))
        diff = float(np.max(np.linalg.norm(B - B2, axis=(-2, -1))))
        change = diff / scale if scale > 0 else 0.0
        if diff > 0.1 * scale + 1e-12:
            raise StepTooLarge(f"halving h_fd={h:g} changed B by {change:.1%}")
        B = B2
    c = np.fft.fft(B, axis=0) / N
    modes = {int(k): c[k % N] for k in range(-N // 2 + 1, N // 2)}
    return DerivedAttenuation((x0, y0), B, modes, h, change, diag)
