"""Data export: scattering data, transforms, traces, factorizations, modes.

CSV numbers are written with ``repr`` so identical inputs give
byte-identical files.  Boundary fans that drop glancing directions record
the number of dropped rays in a trailing ``#skipped_glancing,K`` row.
"""

from __future__ import annotations

import csv
import json

import numpy as np

from .errors import DimensionMismatch
from .fiber_fourier import decompose, mode_energies, parseval_defect
from .flow import boundary_fan, extend_scenario, integrate_flow
from .loopfact import FIBERWISE_NOTE, integrating_factor_loops, iwasawa_factorize
from .transport import attenuated_transform, nonabelian_transform


def _num(v) -> str:
    return repr(float(v))


def _fan(scenario, fan):
    n_beta, n_dir = fan
    states, beta, alpha = boundary_fan(scenario.surface, n_beta, n_dir, scenario.numerics.eps_glance)
    return states, beta, alpha, n_beta * n_dir - states.shape[0]


def _complex_columns(prefix, shape):
    idx = [""] if shape == () else ["".join(map(str, i)) for i in np.ndindex(*shape)]
    return [f"{prefix}{i}_{part}" for i in idx for part in ("re", "im")]


def _write_rows(path, header, beta, alpha, values, skipped):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for b, a, v in zip(beta, alpha, values):
            flat = np.asarray(v).ravel()
            row = [_num(b), _num(a)]
            for z in flat:
                row += [_num(z.real), _num(z.imag)]
            w.writerow(row)
        w.writerow(["#skipped_glancing", skipped])


def export_scatter(scenario, pair, fan, path) -> dict:
    """Scattering data ``C(s)`` on a regular fan: ``beta, alpha_angle, cIJ_re, cIJ_im``."""
    states, beta, alpha, skipped = _fan(scenario, fan)
    C = nonabelian_transform(scenario, pair, states)
    _write_rows(path, ["beta", "alpha_angle"] + _complex_columns("c", (pair.n, pair.n)), beta, alpha, C, skipped)
    return {"rows": int(states.shape[0]), "skipped_glancing": int(skipped)}


def export_transform(scenario, pair, source, fan, path) -> dict:
    """Attenuated transform on a regular fan: ``beta, alpha_angle, uI_re, uI_im``."""
    if source.n != pair.n:
        raise DimensionMismatch(f"source dimension {source.n} != pair dimension {pair.n}")
    states, beta, alpha, skipped = _fan(scenario, fan)
    u = attenuated_transform(scenario, pair, source, states)
    _write_rows(path, ["beta", "alpha_angle"] + _complex_columns("u", (pair.n,)), beta, alpha, u, skipped)
    return {"rows": int(states.shape[0]), "skipped_glancing": int(skipped)}


def export_trace(scenario, state, path) -> dict:
    """One lambda-geodesic as ``t, x, y, theta`` rows up to its exit."""
    tr = integrate_flow(scenario, state)
    tr.to_csv(path)
    return {"rows": int(len(tr.t)), "exit": tr.exit, "tau_plus": tr.tau_plus}


def _dump(obj, path):
    def default(o):
        if isinstance(o, complex):
            return [o.real, o.imag]
        if isinstance(o, np.generic):
            return o.item()
        if isinstance(o, np.ndarray):
            return o.tolist()
        return str(o)

    text = json.dumps(obj, sort_keys=True, indent=2, default=default)
    with open(path, "w") as fh:
        fh.write(text + "\n")


def export_factorize(scenario, pair, points, path) -> dict:
    """Iwasawa factors of the integrating-factor loops at base points (JSON)."""
    ext = extend_scenario(scenario)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    loops = integrating_factor_loops(ext, pair, pts[:, 0], pts[:, 1])
    N = scenario.numerics.N_theta
    out, ok = [], []
    for p, L in zip(pts, loops):
        fac = iwasawa_factorize(L, N, scenario.numerics.K_trunc)
        ok.append(fac.passes())
        out.append(
            {
                "point": [float(p[0]), float(p[1])],
                "F": fac.F.to_json_obj(),
                "U": fac.U.to_json_obj(),
                "diagnostics": fac.diagnostics,
            }
        )
    _dump({"factorizations": out, "note": FIBERWISE_NOTE}, path)
    return {"points": len(out), "pass": all(ok)}


MODE_FLOOR = 1e-8  # below the transport solver's accuracy; smaller modes are not reported


def export_modes(scenario, pair, source, point, path, mode_floor: float = MODE_FLOOR) -> dict:
    """Fiber modes of the transport solution ``u^f`` at one base point (JSON)."""
    N = scenario.numerics.N_theta
    th = 2 * np.pi * np.arange(N) / N
    x, y = float(point[0]), float(point[1])
    z = np.stack([np.full(N, x), np.full(N, y), th], axis=-1)
    u = attenuated_transform(scenario, pair, source, z, check=False)
    modes = decompose(u, N, drop_below=mode_floor)
    rep = {
        "point": [x, y],
        "mode_floor": mode_floor,
        "modes": {str(k): np.stack([c.real, c.imag], axis=-1).tolist() for k, c in modes.items()},
        "mode_energy": {str(k): e for k, e in mode_energies(modes).items()},
        "parseval_defect": parseval_defect(u, decompose(u, N, drop_below=0.0)),
    }
    rep["parseval_pass"] = rep["parseval_defect"] < 1e-10
    _dump(rep, path)
    return {"modes": sorted(modes)}


def run_export(scenario, experiment, out, *, fan=(64, 32), pair=None, source=None, state=None, points=None) -> dict:
    """Dispatch an export by name: scatter, transform, trace, factorize or modes."""
    pairs = scenario.pairs
    sources = scenario.sources

    def pick(table, name, what):
        if name is None:
            if not table:
                raise KeyError(f"scenario defines no {what}")
            name = sorted(table)[0]
        if name not in table:
            raise KeyError(f"unknown {what} {name!r}")
        return table[name]

    if experiment == "scatter":
        return export_scatter(scenario, pick(pairs, pair, "pair"), fan, out)
    if experiment == "transform":
        return export_transform(scenario, pick(pairs, pair, "pair"), pick(sources, source, "source"), fan, out)
    if experiment == "trace":
        r = scenario.surface.radius
        return export_trace(scenario, (-r, 0.0, 0.0) if state is None else state, out)
    if experiment == "factorize":
        return export_factorize(scenario, pick(pairs, pair, "pair"), [(0.0, 0.0)] if points is None else points, out)
    if experiment == "modes":
        p = (0.0, 0.0) if points is None else np.atleast_2d(points)[0]
        return export_modes(scenario, pick(pairs, pair, "pair"), pick(sources, source, "source"), p, out)
    raise ValueError(f"unknown experiment {experiment!r}")
