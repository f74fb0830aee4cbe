"""Vertical Fourier analysis on the unit circle bundle.

A fiber function ``w(x, theta) = sum_k c_k(x) exp(i k theta)`` is stored as
the finite map ``{k: c_k}`` of coefficient fields.  The vertical field acts
diagonally, ``V(c e^{ikt}) = i k c e^{ikt}``, and in the conformal chart the
horizontal field shifts modes by one:

    X(c e^{ikt}) = exp(-phi) [ e^{i(k+1)t} ((d_x - i d_y) c - k (phi_x - i phi_y) c) / 2
                             + e^{i(k-1)t} ((d_x + i d_y) c + k (phi_x + i phi_y) c) / 2 ].

``lambda V`` is the convolution of the modes of ``lambda`` with ``i k c_k``.
All of this is exact mode arithmetic; theta-grids appear only in
:func:`decompose` for cross-checks against sampled data.
"""

from __future__ import annotations

import json

import numpy as np

from .errors import AliasingSuspected, DegreeViolation
from .fields import PolyField, as_poly


def _product(a, b):
    if not (isinstance(a, PolyField) and isinstance(b, PolyField)):
        raise TypeError("fiber products need polynomial coefficients")
    if a.shape == () or b.shape == ():
        return a * b
    return a @ b


def _nonzero(c) -> bool:
    return not isinstance(c, PolyField) or bool(np.any(c.coeffs != 0))


class FiberFunction:
    """Finite Fourier sum ``sum_k c_k(x) exp(i k theta)``.

    Parameters
    ----------
    modes : dict
        ``{k: c_k}``; numbers and arrays are promoted to constant fields.
        Coefficients must share one value shape.
    """

    def __init__(self, modes=None, shape=None):
        modes = {} if modes is None else dict(modes)
        self.modes = {}
        for k, c in modes.items():
            c = as_poly(c) if not hasattr(c, "grad") else c
            if _nonzero(c):
                self.modes[int(k)] = c
        shapes = {tuple(c.shape) for c in self.modes.values()}
        if len(shapes) > 1:
            raise ValueError(f"mode coefficients have mixed shapes {shapes}")
        self.shape = shapes.pop() if shapes else (() if shape is None else tuple(shape))

    @classmethod
    def from_lambda(cls, lam) -> "FiberFunction":
        return cls(lam.modes)

    @classmethod
    def exp_mode(cls, k: int, c=1.0) -> "FiberFunction":
        """``c(x) exp(i k theta)``."""
        return cls({k: c})

    @property
    def degree(self) -> int:
        return max((abs(k) for k in self.modes), default=0)

    def __repr__(self):
        return f"FiberFunction(modes={sorted(self.modes)}, shape={self.shape})"

    def __call__(self, x, y, theta):
        x, y, theta = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (x, y, theta)))
        out = np.zeros(x.shape + self.shape, dtype=complex)
        for k, c in self.modes.items():
            out += c(x, y) * np.exp(1j * k * theta).reshape(theta.shape + (1,) * len(self.shape))
        return out

    def mode_values(self, x, y) -> dict:
        return {k: np.asarray(c(x, y), dtype=complex) for k, c in sorted(self.modes.items())}

    # -- algebra ------------------------------------------------------------
    def __add__(self, other: "FiberFunction") -> "FiberFunction":
        out = dict(self.modes)
        for k, c in other.modes.items():
            out[k] = out[k] + c if k in out else c
        return FiberFunction(out, self.shape)

    def __neg__(self):
        return FiberFunction({k: -c for k, c in self.modes.items()}, self.shape)

    def __sub__(self, other):
        return self + (-other)

    def scaled(self, a) -> "FiberFunction":
        return FiberFunction({k: c * a for k, c in self.modes.items()}, self.shape)

    def __mul__(self, other: "FiberFunction") -> "FiberFunction":
        """Pointwise product: convolution of the mode lists."""
        if not isinstance(other, FiberFunction):
            return self.scaled(other)
        out = {}
        for k, a in self.modes.items():
            for j, b in other.modes.items():
                p = _product(a, b)
                out[k + j] = out[k + j] + p if k + j in out else p
        return FiberFunction(out)

    def conj(self) -> "FiberFunction":
        """Complex conjugate: mode ``k`` of the result is ``conj(c_{-k})``."""
        return FiberFunction({-k: c.conj() for k, c in self.modes.items()}, self.shape)

    def vertical(self) -> "FiberFunction":
        """``V w``; ``-i V`` multiplies mode ``k`` by ``k``."""
        return FiberFunction({k: c * (1j * k) for k, c in self.modes.items() if k != 0}, self.shape)

    def is_real(self, x, y, tol=1e-12) -> bool:
        for k, c in self.modes.items():
            other = self.modes.get(-k)
            ov = other(x, y) if other is not None else 0.0
            if np.max(np.abs(ov - np.conj(c(x, y)))) > tol:
                return False
        return True


def holomorphic_project(w: FiberFunction, sign: str = "+") -> FiberFunction:
    """Keep modes ``k >= 0`` (``sign='+'``) or ``k <= 0`` (``sign='-'``)."""
    if sign not in ("+", "-"):
        raise ValueError("sign must be '+' or '-'")
    keep = (lambda k: k >= 0) if sign == "+" else (lambda k: k <= 0)
    return FiberFunction({k: c for k, c in w.modes.items() if keep(k)}, w.shape)


# ---------------------------------------------------------------------------
# sampled data


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def decompose(samples, N_theta: int | None = None, *, expected_degree: int | None = None, drop_below=1e-13) -> dict:
    """Fourier modes of samples ``w(theta_j)``, ``theta_j = 2 pi j / N``.

    Parameters
    ----------
    samples : array_like, shape (N_theta,) + value_shape
    expected_degree : int, optional
        Enforces ``N_theta >= 4 (expected_degree + 1)``.
    drop_below : float
        Modes with norm below ``drop_below * max(1, rms)`` are omitted.

    Returns
    -------
    dict
        ``{k: c_k}`` for ``-N/2 < k <= N/2``.

    Raises
    ------
    AliasingSuspected
        If modes with ``|k| > 3N/8`` carry more than 1e-8 of the energy.
    """
    u = np.asarray(samples, dtype=complex)
    N = u.shape[0] if N_theta is None else int(N_theta)
    if u.shape[0] != N:
        raise ValueError(f"expected {N} samples along axis 0, got {u.shape[0]}")
    if not _is_pow2(N):
        raise ValueError(f"N_theta must be a power of two, got {N}")
    if expected_degree is not None and N < 4 * (expected_degree + 1):
        raise ValueError(f"N_theta={N} too small for degree {expected_degree}")
    c = np.fft.fft(u, axis=0) / N
    k = np.fft.fftfreq(N, 1.0 / N).astype(int)
    k[k == -N // 2] = N // 2
    energy = np.sum(np.abs(c.reshape(N, -1)) ** 2, axis=1)
    total = energy.sum()
    if total > 0 and energy[np.abs(k) > 3 * N // 8].sum() > 1e-8 * total:
        raise AliasingSuspected(
            f"{energy[np.abs(k) > 3 * N // 8].sum() / total:.2e} of the energy sits in the top quarter of the spectrum"
        )
    cut = drop_below * max(1.0, np.sqrt(total))
    return {int(kk): c[j] for j, kk in sorted(enumerate(k), key=lambda t: t[1]) if np.sqrt(energy[j]) > cut}


def parseval_defect(samples, modes: dict) -> float:
    """``|sum_k |c_k|^2 - mean |w|^2|`` for the output of :func:`decompose`."""
    u = np.asarray(samples, dtype=complex)
    lhs = sum(float(np.sum(np.abs(c) ** 2)) for c in modes.values())
    return abs(lhs - float(np.mean(np.sum(np.abs(u.reshape(u.shape[0], -1)) ** 2, axis=1))))


def synthesize(modes: dict, theta) -> np.ndarray:
    """Evaluate ``sum_k c_k exp(i k theta)`` for numeric mode coefficients."""
    theta = np.asarray(theta, dtype=float)
    out = None
    for k, c in modes.items():
        c = np.asarray(c)
        term = np.exp(1j * k * theta).reshape(theta.shape + (1,) * c.ndim) * c
        out = term if out is None else out + term
    return np.zeros(theta.shape) if out is None else out


# ---------------------------------------------------------------------------
# the generator X + lambda V in mode arithmetic


def _accumulate(out, k, val):
    out[k] = out[k] + val if k in out else val


def apply_generator(scenario, w: FiberFunction, x, y) -> dict:
    """Modes of ``(X + lambda V) w`` at base points ``(x, y)``.

    Returns ``{k: array}`` with array shape ``broadcast(x, y).shape + w.shape``.
    Modes that receive no contribution are absent, so leakage statements
    about them are exact.
    """
    surface, lam = scenario.surface, scenario.lam
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    pad = (slice(None),) * x.ndim + (None,) * len(w.shape)
    e = np.exp(-surface.phi(x, y))[pad]
    px, py = (g[pad] for g in surface.phi.grad(x, y))
    out: dict = {}
    for k, c in w.modes.items():
        cv = c(x, y)
        cx, cy = c.grad(x, y)
        _accumulate(out, k + 1, 0.5 * e * ((cx - 1j * cy) - k * (px - 1j * py) * cv))
        _accumulate(out, k - 1, 0.5 * e * ((cx + 1j * cy) + k * (px + 1j * py) * cv))
        if k == 0:
            continue
        for m, lm in lam.modes.items():
            _accumulate(out, k + m, lm(x, y)[pad] * (1j * k) * cv)
    return dict(sorted(out.items()))


def mapping_property_check(scenario, w: FiberFunction, x, y) -> dict:
    """Leakage ``max sum_{k <= -2} |((X + lambda V) w)_k|`` over the points."""
    if scenario.lam.degree > 2:
        raise DegreeViolation(f"lambda has degree {scenario.lam.degree} > 2; use obstruction_demo")
    if any(k < 0 for k in w.modes):
        raise ValueError("w must have only modes k >= 0")
    modes = apply_generator(scenario, w, x, y)
    leak = np.zeros(np.broadcast(np.asarray(x), np.asarray(y)).shape)
    for k, c in modes.items():
        if k <= -2:
            leak = leak + np.sqrt(np.sum(np.abs(c.reshape(leak.shape + (-1,))) ** 2, axis=-1))
    worst = float(np.max(leak)) if leak.size else 0.0
    return {
        "leakage": worst,
        "lowest_mode": min(modes, default=0),
        "mode_energy": mode_energies(modes),
        "pass": worst < 1e-10,
    }


def obstruction_demo(scenario, c=None, points=None) -> dict:
    """Witness that ``X + lambda V`` leaks below mode -1 once ``deg lambda = 3``.

    Uses ``w = c(x) exp(i theta)`` (default ``c = 1``) and reports the mode
    -2 coefficient at the sample point where it is largest.
    """
    lam = scenario.lam
    if -3 not in lam.modes and 3 not in lam.modes:
        raise DegreeViolation("lambda has no mode of order 3; nothing to demonstrate")
    c = as_poly(1.0) if c is None else c
    w = FiberFunction({1: c})
    if points is None:
        r = scenario.surface.radius
        g = np.linspace(-0.7 * r, 0.7 * r, 5)
        X, Y = np.meshgrid(g, g, indexing="ij")
        points = (X.ravel(), Y.ravel())
    x, y = (np.atleast_1d(np.asarray(p, dtype=float)) for p in points)
    coef = apply_generator(scenario, w, x, y).get(-2, np.zeros(x.shape, dtype=complex))
    j = int(np.argmax(np.abs(coef)))
    return {
        "point": [float(x[j]), float(y[j])],
        "mode": -2,
        "coefficient": complex(coef[j]),
        "magnitude": float(abs(coef[j])),
        "witness": "w = c(x) exp(i theta)",
    }


# ---------------------------------------------------------------------------
# matrix-valued mode checks


def _numeric_modes(B, x=None, y=None) -> dict:
    if isinstance(B, FiberFunction):
        if x is None:
            x, y = np.zeros(1), np.zeros(1)
        return B.mode_values(x, y)
    return {int(k): np.asarray(v, dtype=complex) for k, v in B.items()}


def skew_hermitian_degree_check(B, m: int, x=None, y=None, *, tol=5e-4, n_theta=64) -> dict:
    """Skewness ``max |B + B^*|_F`` and out-of-band energy ``sum_{|k|>m} |B_k|^2``.

    ``B`` is a matrix :class:`FiberFunction` (sampled at ``(x, y)``) or a
    numeric mode map ``{k: array (..., n, n)}``.
    """
    modes = _numeric_modes(B, x, y)
    theta = 2 * np.pi * np.arange(n_theta) / n_theta
    vals = synthesize(modes, theta)
    if np.ndim(vals) < 3:
        skew = 0.0
    else:
        skew = float(np.max(np.linalg.norm(vals + np.conj(np.swapaxes(vals, -1, -2)), axis=(-2, -1))))
    energy = mode_energies(modes)
    band = float(sum(v for k, v in energy.items() if abs(k) > m))
    return {
        "skew_defect": skew,
        "out_of_band_energy": band,
        "m": m,
        "mode_energy": energy,
        "pass": skew < tol and band < tol,
    }


def mode_energies(modes: dict) -> dict:
    """``{k: sum |c_k|^2}`` (summed over sample points and matrix entries)."""
    return {int(k): float(np.sum(np.abs(np.asarray(c)) ** 2)) for k, c in sorted(modes.items())}


def mode_energy_json(report: dict) -> str:
    """Serialize a report holding ``mode_energy`` maps; keys sorted, complex as [re, im]."""

    def default(o):
        if isinstance(o, complex):
            return [o.real, o.imag]
        if isinstance(o, np.generic):
            return o.item()
        raise TypeError(type(o))

    clean = {k: ({str(kk): vv for kk, vv in v.items()} if k == "mode_energy" else v) for k, v in report.items()}
    return json.dumps(clean, sort_keys=True, default=default, indent=2)
