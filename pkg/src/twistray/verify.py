"""Verification suites over a certified scenario.

Every check returns a report entry with the identity it tests (as a
formula), the measured residual, the tolerance and the runtime.  Checks
that need objects the scenario does not define (a second pair, a gauge, a
source) draw seeded random ones so runs are reproducible.
"""

from __future__ import annotations

import time

import numpy as np

from .errors import DegreeViolation, TwistrayError
from .fiber_fourier import (
    FiberFunction,
    apply_generator,
    decompose,
    mapping_property_check,
    obstruction_demo,
    parseval_defect,
    skew_hermitian_degree_check,
)
from .fields import PolyField
from .flow import (
    boundary_fan,
    exit_times,
    extend_scenario,
    flow_states,
    nontrapping_certificate,
    random_interior_states,
)
from .geometry import PhaseFunction, check_structure_equations
from .loopfact import FIBERWISE_NOTE, derived_attenuation_B
from .transport import (
    AttenuationPair,
    GaugeElement,
    SourceTerm,
    attenuated_transform,
    boundary_vanishing,
    cocycle,
    gauge_equivalence_witness,
    gauge_transform,
    integrating_factor,
    kernel_element,
    pseudolinearization_residual,
    transport_via_integrating_factor,
)

SUITES = (
    "structure",
    "flow",
    "cocycle",
    "integrating-factor",
    "pseudolinearization",
    "gauge",
    "kernel",
    "fourier",
    "obstruction",
    "loopfact",
)

DEFAULT_TOLERANCES = {
    "structure": 1e-10,
    "chord": 1e-8,
    "nontrapping": 1e-4,
    "glancing_sqrt": 1e-3,
    "cocycle": 1e-8,
    "integral_representation": 1e-6,
    "integrating_factor_flow": 1e-7,
    "pseudolinearization": 1e-5,
    "step_halving_ratio": 8.0,
    "gauge_algebraic": 1e-8,
    "gauge_scattering": 1e-6,
    "kernel": 1e-6,
    "mapping_leakage": 1e-10,
    "generator_fd": 1e-5,
    "parseval": 1e-10,
    "obstruction_magnitude": 1e-8,
    "loop_holomorphy": 1e-9,
    "loop_unitarity": 1e-8,
    "loop_reconstruction": 1e-7,
    "B_skew": 5e-4,
    "B_band": 5e-4,
}


class _Ctx:
    def __init__(self, scenario, fan=(8, 8), seed=None):
        self.sc = scenario
        self.seed = scenario.seed if seed is None else seed
        self.fan = boundary_fan(scenario.surface, *fan)[0]
        self.tol = dict(DEFAULT_TOLERANCES)
        self.tol.update(scenario.numerics.tolerances)
        self._ext = None

    def rng(self, salt: int):
        return np.random.default_rng([self.seed, salt])

    @property
    def ext(self):
        if self._ext is None:
            self._ext = extend_scenario(self.sc)
        return self._ext

    def pair(self, index=0):
        pairs = [self.sc.pairs[k] for k in sorted(self.sc.pairs)]
        if index < len(pairs):
            return pairs[index]
        n = pairs[0].n if pairs else 2
        return AttenuationPair.random(n, 1, self.rng(100 + index), 0.5)

    def source(self, n):
        for k in sorted(self.sc.sources):
            if self.sc.sources[k].n == n:
                return self.sc.sources[k]
        rng = self.rng(200)
        return SourceTerm(*(PolyField.random(1, (n,), rng, 0.5) for _ in range(3)))

    def gauge(self, n):
        for k in sorted(self.sc.gauges):
            if self.sc.gauges[k].n == n:
                return self.sc.gauges[k]
        W = PolyField.random(1, (n, n), self.rng(300), 0.3)
        return GaugeElement(PolyField.identity(n) + boundary_vanishing(W, self.sc.surface.radius), self.sc.surface.radius)


def _entry(suite, check, identity, residual, tol, *, mode="below", **extra):
    ok = bool(residual < tol) if mode == "below" else bool(residual > tol)
    return {
        "suite": suite,
        "check": check,
        "identity": identity,
        "residual": float(residual),
        "tolerance": float(tol),
        "comparison": "<" if mode == "below" else ">",
        "pass": ok,
        **extra,
    }


# ---------------------------------------------------------------------------
# suites


def _suite_structure(c: _Ctx):
    rng = c.rng(1)
    u = _test_function(rng.standard_normal((3, 3)) * 0.3)
    samples = random_interior_states(c.sc.surface, 100, rng)
    res = check_structure_equations(c.sc.surface, u, samples)
    return [_entry("structure", "commutators", "[X,V] = X_perp, [X_perp,V] = -X, [X,X_perp] = -K V", res["max"], c.tol["structure"])]


def _test_function(a):
    import sympy as sp

    x, y, t = sp.symbols("x y t")
    expr = sp.sin(a[0, 0] * x + a[0, 1] * y + t) + a[1, 0] * x * y * sp.cos(2 * t) + a[2, 2] * x**2 * sp.sin(t)
    return PhaseFunction.from_sympy(expr, (x, y, t))


def _suite_flow(c: _Ctx):
    out = []
    sc = c.sc
    z = random_interior_states(sc.surface, 20, c.rng(2), 0.8)
    cert = nontrapping_certificate(sc, z)
    out.append(_entry("flow", "nontrapping", "(X + lambda V)(-tau_tilde) = 2", cert["max_deviation"], c.tol["nontrapping"]))
    # spot check near the glancing set: the curve through a tangent state at
    # distance eps from the boundary has length ~ c sqrt(eps)
    R = sc.surface.radius
    beta = c.rng(2).uniform(0, 2 * np.pi)
    eps = np.array([1e-6, 1e-8])
    worst = 0.0
    for turn in (np.pi / 2, -np.pi / 2):
        z = np.stack([R * (1 - eps) * np.cos(beta), R * (1 - eps) * np.sin(beta), np.full(2, beta + turn)], axis=-1)
        tp, tm = exit_times(sc, z)
        ratio = (tp + tm) / np.sqrt(eps)
        worst = max(worst, abs(ratio[0] - ratio[1]) / ratio[1])
    out.append(_entry("flow", "glancing_continuity", "tau_+ + tau_- ~ c sqrt(eps) near glancing", worst, c.tol["glancing_sqrt"]))
    if not sc.lam.modes and sc.surface.phi.degree == 0 and not np.any(sc.surface.phi.coeffs):
        tp, _ = exit_times(sc, c.fan)
        x, y, th = c.fan.T
        chord = -2 * (x * np.cos(th) + y * np.sin(th))
        out.append(_entry("flow", "chord", "tau = -2 <x, v>", np.max(np.abs(tp - chord)), c.tol["chord"]))
    return out


def _suite_cocycle(c: _Ctx):
    sc = c.sc
    pair = c.pair()
    rng = c.rng(3)
    s = random_interior_states(sc.surface, 20, rng, 0.3)
    t1 = rng.uniform(0, 0.3 * sc.surface.radius, 20)
    t2 = rng.uniform(0, 0.3 * sc.surface.radius, 20)
    C12 = cocycle(sc, pair, s, t1 + t2)
    C1 = cocycle(sc, pair, s, t1)
    C2 = cocycle(sc, pair, flow_states(sc, s, t1), t2)
    res = np.max(np.linalg.norm(C12 - C2 @ C1, axis=(-2, -1)))
    det = float(np.min(np.abs(np.linalg.det(C12))))
    return [_entry("cocycle", "law", "C(s, t+r) = C(phi_t s, r) C(s, t)", res, c.tol["cocycle"], min_abs_det=det)]


def _suite_integrating_factor(c: _Ctx):
    ext = c.ext
    pair = c.pair()
    src = c.source(pair.n)
    fan = c.fan[:: max(1, c.fan.shape[0] // 8)]
    u1 = transport_via_integrating_factor(ext, pair, src, fan)
    u2 = attenuated_transform(c.sc, pair, src, fan)
    scale = np.maximum(np.linalg.norm(u2, axis=-1), 1e-300)
    rel = np.max(np.linalg.norm(u1 - u2, axis=-1) / scale)
    # R(phi_t s) = C(s, t) R(s) along interior orbits
    rng = c.rng(4)
    s = random_interior_states(c.sc.surface, 10, rng, 0.5)
    t = rng.uniform(0, 0.3 * c.sc.surface.radius, 10)
    lhs = integrating_factor(ext, pair, flow_states(c.sc, s, t))
    rhs = cocycle(c.sc, pair, s, t) @ integrating_factor(ext, pair, s)
    res = np.max(np.linalg.norm(lhs - rhs, axis=(-2, -1)))
    return [
        _entry("integrating-factor", "integral_representation", "u = R int_0^tau (R^-1 f)(phi_t s) dt",
               rel, c.tol["integral_representation"]),
        _entry("integrating-factor", "flow_form", "R(phi_t s) = C(s, t) R(s)", res, c.tol["integrating_factor_flow"]),
    ]


def _suite_pseudolinearization(c: _Ctx):
    A, B = c.pair(0), c.pair(1)
    if B.n != A.n:
        B = AttenuationPair.random(A.n, 1, c.rng(101), 0.5)
    res = pseudolinearization_residual(c.sc, A, B, c.fan)["residual"]
    small = c.fan[:: max(1, c.fan.shape[0] // 16)]
    h0 = 0.05 * c.sc.surface.diameter
    r1 = pseudolinearization_residual(c.sc.with_numerics(h=h0), A, B, small)["residual"]
    r2 = pseudolinearization_residual(c.sc.with_numerics(h=h0 / 2), A, B, small)["residual"]
    ratio = r1 / r2 if r2 > 1e-13 else np.inf
    ok_ratio = r1 < 1e-12 or ratio >= c.tol["step_halving_ratio"]
    ident = "C_A C_B^-1 = Id + I_E(A,B)(A - B)"
    return [
        _entry("pseudolinearization", "residual", ident, res, c.tol["pseudolinearization"]),
        {
            **_entry("pseudolinearization", "step_halving", ident, ratio, c.tol["step_halving_ratio"], mode="above",
                     coarse_residuals=[r1, r2]),
            "pass": bool(ok_ratio),
        },
    ]


def _suite_gauge(c: _Ctx):
    A = c.pair()
    g = c.gauge(A.n)
    rep = gauge_equivalence_witness(c.sc, A, gauge_transform(A, g), g, c.fan)
    return [
        _entry("gauge", "algebraic", "B = u^-1 (X + lambda V) u + u^-1 A u", rep["algebraic_residual"], c.tol["gauge_algebraic"]),
        _entry("gauge", "scattering", "C_{(A,Phi).u} = C_{A,Phi}", rep["scattering_residual"], c.tol["gauge_scattering"],
               boundary_flag=rep["boundary_flag"]),
    ]


def _suite_kernel(c: _Ctx):
    A = c.pair()
    q = PolyField.random(1, (A.n,), c.rng(5), 0.5)
    f = kernel_element(A, boundary_vanishing(q, c.sc.surface.radius), c.sc.surface.radius)
    u = attenuated_transform(c.sc, A, f, c.fan)
    return [_entry("kernel", "vanishing", "I(Phi p + dp + A p) = 0 for p|boundary = 0",
                   np.max(np.linalg.norm(u, axis=-1)), c.tol["kernel"])]


def _suite_fourier(c: _Ctx):
    out = []
    rng = c.rng(6)
    w = FiberFunction({k: PolyField.random(2, (), rng, 0.5) for k in (0, 1, 2)})
    pts = random_interior_states(c.sc.surface, 20, rng, 0.7)
    if c.sc.lam.degree <= 2:
        rep = mapping_property_check(c.sc, w, pts[:, 0], pts[:, 1])
        out.append(_entry("fourier", "mapping_property", "(X + lambda V): sum_{k>=0} -> sum_{k>=-1}",
                          rep["leakage"], c.tol["mapping_leakage"]))
    h = 1e-4
    fd = (w(*flow_states(c.sc, pts, h).T) - w(*flow_states(c.sc, pts, -h).T)) / (2 * h)
    modes = apply_generator(c.sc, w, pts[:, 0], pts[:, 1])
    val = sum(v * np.exp(1j * k * pts[:, 2]) for k, v in modes.items())
    out.append(_entry("fourier", "generator_fd", "(X + lambda V) w by modes = d/dt w(phi_t s)",
                      np.max(np.abs(fd - val)), c.tol["generator_fd"]))
    N = c.sc.numerics.N_theta
    th = 2 * np.pi * np.arange(N) / N
    samples = w(pts[0, 0], pts[0, 1], th)
    dm = decompose(samples, N)
    out.append(_entry("fourier", "parseval", "sum |u_k|^2 = mean |u|^2", parseval_defect(samples, dm), c.tol["parseval"]))
    return out


def _suite_obstruction(c: _Ctx):
    lam = c.sc.lam
    if 3 in lam.modes or -3 in lam.modes:
        rep = obstruction_demo(c.sc)
        return [_entry("obstruction", "mode_-2_witness", "((X + lambda V)(c e^{i theta}))_{-2} = i c lambda_{-3}",
                       rep["magnitude"], c.tol["obstruction_magnitude"], mode="above",
                       point=rep["point"], coefficient=[rep["coefficient"].real, rep["coefficient"].imag])]
    try:
        obstruction_demo(c.sc)
        refused = False
    except DegreeViolation:
        refused = True
    return [{**_entry("obstruction", "refusal", "no mode-3 lambda, no obstruction", 0.0, 1.0),
             "pass": refused, "note": "lambda has no mode of order 3"}]


def _suite_loopfact(c: _Ctx, n_points: int = 2):
    ext = c.ext
    A = c.pair()
    rng = c.rng(7)
    r = 0.5 * c.sc.surface.radius * np.sqrt(rng.uniform(0, 1, n_points))
    a = rng.uniform(0, 2 * np.pi, n_points)
    m = max(1, c.sc.lam.degree)
    worst = {"holomorphy": 0.0, "unitarity": 0.0, "reconstruction": 0.0, "winding": 0, "skew": 0.0, "band": 0.0}
    for x, y in zip(r * np.cos(a), r * np.sin(a)):
        d = derived_attenuation_B(ext, A, (x, y))
        diag = d.factor_diagnostics
        worst["holomorphy"] = max(worst["holomorphy"], diag["holomorphy"])
        worst["unitarity"] = max(worst["unitarity"], diag["unitarity"])
        worst["reconstruction"] = max(worst["reconstruction"], diag["reconstruction"])
        worst["winding"] = max(worst["winding"], abs(diag["det_winding"]))
        rep = skew_hermitian_degree_check(d.modes, m)
        worst["skew"] = max(worst["skew"], rep["skew_defect"])
        worst["band"] = max(worst["band"], rep["out_of_band_energy"])
    note = {"note": FIBERWISE_NOTE}
    return [
        _entry("loopfact", "holomorphy", "F, F^-1 have no negative modes", worst["holomorphy"], c.tol["loop_holomorphy"], **note),
        _entry("loopfact", "unitarity", "U U^* = Id", worst["unitarity"], c.tol["loop_unitarity"], **note),
        _entry("loopfact", "reconstruction", "F U = R", worst["reconstruction"], c.tol["loop_reconstruction"], **note),
        _entry("loopfact", "det_winding", "winding of det F = 0", worst["winding"], 0.5, **note),
        _entry("loopfact", "B_skew", "B = -((X + lambda V) U) U^-1 is skew-Hermitian", worst["skew"], c.tol["B_skew"], **note),
        _entry("loopfact", "B_band", f"B has modes |k| <= {m}", worst["band"], c.tol["B_band"], **note),
    ]


_RUNNERS = {
    "structure": _suite_structure,
    "flow": _suite_flow,
    "cocycle": _suite_cocycle,
    "integrating-factor": _suite_integrating_factor,
    "pseudolinearization": _suite_pseudolinearization,
    "gauge": _suite_gauge,
    "kernel": _suite_kernel,
    "fourier": _suite_fourier,
    "obstruction": _suite_obstruction,
    "loopfact": _suite_loopfact,
}


def run_verify(scenario, suites=None, *, fan=(8, 8), seed=None) -> tuple[int, dict]:
    """Run the selected suites; returns ``(exit_code, report)``.

    Exit code 0 when every check passes and 1 otherwise.  Errors raised
    inside a suite are recorded as failed entries.
    """
    suites = list(SUITES) if not suites else list(suites)
    unknown = [s for s in suites if s not in _RUNNERS]
    if unknown:
        raise ValueError(f"unknown suites {unknown}; choose from {list(SUITES)}")
    ctx = _Ctx(scenario, fan, seed)
    entries = []
    for name in suites:
        t0 = time.perf_counter()
        try:
            got = _RUNNERS[name](ctx)
        except (TwistrayError, ValueError, np.linalg.LinAlgError) as e:
            got = [{"suite": name, "check": "error", "identity": "", "error": f"{type(e).__name__}: {e}", "pass": False}]
        dt = time.perf_counter() - t0
        for e in got:
            e["runtime_s"] = dt
        entries.extend(got)
    entries.sort(key=lambda e: (e["suite"], e["check"]))
    ok = all(e["pass"] for e in entries)
    report = {"seed": ctx.seed, "suites": sorted(suites), "checks": entries, "pass": ok}
    return (0 if ok else 1), report
