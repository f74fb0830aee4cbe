"""Scenario files.

A scenario is a YAML (or JSON) document::

    surface:
      radius: 1.0
      phi: [[2, 0, 0.1], [0, 2, 0.1]]      # terms [i, j, c] of sum c x^i y^j
    lambda:
      modes: {0: 0.3, 1: [[1, 0, 0.2]]}    # non-negative modes of a real field
    pairs:
      A: {n: 2, Ax: ..., Ay: ..., Phi: ...}
      B: {random: {n: 2, degree: 1, scale: 0.5, seed: 7}}
    sources:
      f: {f0: ..., ax: ..., ay: ...}
      k: {kernel: {pair: A, q: {random: {degree: 1, seed: 3}}}}
    gauges:
      u: {n: 2, W: {random: {degree: 1, seed: 5, scale: 0.3}}}   # u = Id + rho W
    numerics: {h: 0.002, N_theta: 256, h_fd: 1.0e-4, tolerances: {cocycle: 1.0e-8}}
    seed: 0

Field values are a number (a multiple of the identity for matrix fields),
a list of ``[i, j, value]`` terms, or ``{random: {...}}``.  Values are
numbers, complex strings such as ``"1+2j"``, or nested lists of those.
"""

from __future__ import annotations

import re
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from .errors import CertificationFailed, SchemaError, TwistrayError
from .fields import PolyField
from .flow import LambdaField, boundary_fan, march_to_exit
from .geometry import ConformalSurface, PhaseState, strict_lambda_convexity_report
from .scenario import Numerics, Scenario
from .transport import AttenuationPair, GaugeElement, SourceTerm, boundary_vanishing, kernel_element

_FIELD = {
    "anyOf": [
        {"type": ["number", "string"]},
        {"type": "array", "items": {"type": "array", "minItems": 3, "maxItems": 3}},
        {
            "type": "object",
            "properties": {
                "random": {
                    "type": "object",
                    "properties": {
                        "degree": {"type": "integer", "minimum": 0},
                        "scale": {"type": "number"},
                        "seed": {"type": "integer"},
                        "complex": {"type": "boolean"},
                    },
                    "additionalProperties": False,
                }
            },
            "required": ["random"],
            "additionalProperties": False,
        },
    ]
}

SCHEMA = {
    "type": "object",
    "properties": {
        "surface": {
            "type": "object",
            "properties": {"radius": {"type": "number", "exclusiveMinimum": 0}, "phi": _FIELD},
            "additionalProperties": False,
        },
        "lambda": {
            "anyOf": [
                {"type": "number"},
                {
                    "type": "object",
                    "properties": {"modes": {"type": "object", "additionalProperties": _FIELD}},
                    "required": ["modes"],
                    "additionalProperties": False,
                },
            ]
        },
        "pairs": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "properties": {
                    "n": {"type": "integer", "minimum": 1},
                    "Ax": _FIELD,
                    "Ay": _FIELD,
                    "Phi": _FIELD,
                    "unitary_connection": {"type": "boolean"},
                    "skew_higgs": {"type": "boolean"},
                    "random": {
                        "type": "object",
                        "properties": {
                            "n": {"type": "integer", "minimum": 1},
                            "degree": {"type": "integer", "minimum": 0},
                            "scale": {"type": "number"},
                            "seed": {"type": "integer"},
                            "skew": {"type": "boolean"},
                        },
                        "required": ["n"],
                        "additionalProperties": False,
                    },
                },
                "additionalProperties": False,
            },
        },
        "sources": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "properties": {
                    "n": {"type": "integer", "minimum": 1},
                    "f0": _FIELD,
                    "ax": _FIELD,
                    "ay": _FIELD,
                    "kernel": {
                        "type": "object",
                        "properties": {"pair": {"type": "string"}, "q": _FIELD},
                        "required": ["pair", "q"],
                        "additionalProperties": False,
                    },
                },
                "additionalProperties": False,
            },
        },
        "gauges": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "properties": {"n": {"type": "integer", "minimum": 1}, "u": _FIELD, "W": _FIELD},
                "required": ["n"],
                "additionalProperties": False,
            },
        },
        "numerics": {
            "type": "object",
            "properties": {
                "h": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "time_cap": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "N_theta": {"type": "integer", "minimum": 8},
                "h_fd": {"type": "number", "exclusiveMinimum": 0},
                "delta": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "eps_glance": {"type": "number", "minimum": 0},
                "K_trunc": {"type": "integer", "minimum": 1},
                "quad_nodes": {"type": "integer", "minimum": 2},
                "tolerances": {"type": "object", "additionalProperties": {"type": "number"}},
            },
            "additionalProperties": False,
        },
        "seed": {"type": "integer"},
    },
    "additionalProperties": False,
}


def _value(v, where):
    if isinstance(v, (list, tuple)):
        return np.array([_value(u, where) for u in v])
    if isinstance(v, str):
        try:
            return complex(v.replace(" ", ""))
        except ValueError:
            raise SchemaError(f"{where}: cannot read {v!r} as a number") from None
    if isinstance(v, (int, float)):
        return float(v)
    raise SchemaError(f"{where}: unexpected value {v!r}")


def parse_field(spec, shape=(), where="field") -> PolyField:
    """Polynomial field from a config entry (see module docstring)."""
    shape = tuple(shape)
    if spec is None:
        return PolyField.zeros(shape)
    if isinstance(spec, dict):
        r = spec["random"]
        return PolyField.random(
            r.get("degree", 1), shape, r.get("seed", 0), r.get("scale", 1.0), r.get("complex", True)
        )
    if not isinstance(spec, list):
        c = _value(spec, where)
        if shape == ():
            return PolyField.constant(c)
        if len(shape) == 2 and shape[0] == shape[1]:
            return PolyField.constant(c * np.eye(shape[0]))
        return PolyField.constant(np.full(shape, c))
    terms = []
    for k, t in enumerate(spec):
        i, j, c = t
        if not (isinstance(i, int) and isinstance(j, int) and i >= 0 and j >= 0):
            raise SchemaError(f"{where}[{k}]: exponents must be non-negative integers")
        c = np.asarray(_value(c, f"{where}[{k}]"))
        if c.shape != shape:
            if c.shape == () and len(shape) == 2 and shape[0] == shape[1]:
                c = c * np.eye(shape[0])
            else:
                raise SchemaError(f"{where}[{k}]: value has shape {c.shape}, expected {shape}")
        terms.append((i, j, c))
    return PolyField.from_terms(terms, shape=shape)


def _pair(name, spec):
    where = f"pairs.{name}"
    if "random" in spec:
        r = spec["random"]
        return AttenuationPair.random(r["n"], r.get("degree", 1), r.get("seed", 0), r.get("scale", 0.5), r.get("skew", False))
    if "n" not in spec:
        raise SchemaError(f"{where}: 'n' is required")
    n = spec["n"]
    comps = [parse_field(spec.get(c), (n, n), f"{where}.{c}") for c in ("Ax", "Ay", "Phi")]
    try:
        return AttenuationPair(
            *comps,
            unitary_connection=spec.get("unitary_connection", False),
            skew_higgs=spec.get("skew_higgs", False),
        )
    except ValueError as e:
        raise SchemaError(f"{where}: {e}") from None


def _source(name, spec, pairs, radius):
    where = f"sources.{name}"
    if "kernel" in spec:
        kspec = spec["kernel"]
        if kspec["pair"] not in pairs:
            raise SchemaError(f"{where}.kernel.pair: unknown pair {kspec['pair']!r}")
        pair = pairs[kspec["pair"]]
        q = parse_field(kspec["q"], (pair.n,), f"{where}.kernel.q")
        return kernel_element(pair, boundary_vanishing(q, radius), radius)
    if "n" not in spec:
        raise SchemaError(f"{where}: 'n' is required")
    n = spec["n"]
    return SourceTerm(*(parse_field(spec.get(c), (n,), f"{where}.{c}") for c in ("f0", "ax", "ay")))


def _gauge(name, spec, radius):
    where = f"gauges.{name}"
    n = spec["n"]
    if "u" in spec:
        u = parse_field(spec["u"], (n, n), f"{where}.u")
    elif "W" in spec:
        u = PolyField.identity(n) + boundary_vanishing(parse_field(spec["W"], (n, n), f"{where}.W"), radius)
    else:
        raise SchemaError(f"{where}: give either 'u' or 'W'")
    return GaugeElement(u, radius)


def scenario_from_dict(doc: dict, where: str = "<config>") -> Scenario:
    """Validate and build a scenario (no certification)."""
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as e:
        path = ".".join(str(p) for p in e.absolute_path) or "<root>"
        raise SchemaError(f"{where}: {path}: {e.message}") from None
    surf = doc.get("surface", {})
    radius = float(surf.get("radius", 1.0))
    surface = ConformalSurface(parse_field(surf.get("phi"), (), "surface.phi"), radius)
    lam_spec = doc.get("lambda", 0.0)
    if isinstance(lam_spec, dict):
        modes = {}
        for k, v in lam_spec["modes"].items():
            try:
                kk = int(k)
            except ValueError:
                raise SchemaError(f"lambda.modes: key {k!r} is not an integer") from None
            if kk < 0:
                raise SchemaError("lambda.modes: give only k >= 0; negative modes follow by conjugation")
            modes[kk] = parse_field(v, (), f"lambda.modes.{k}")
        lam = LambdaField.real(modes)
    else:
        lam = LambdaField.constant(float(lam_spec))
    pairs = {name: _pair(name, spec) for name, spec in sorted(doc.get("pairs", {}).items())}
    sources = {name: _source(name, spec, pairs, radius) for name, spec in sorted(doc.get("sources", {}).items())}
    gauges = {name: _gauge(name, spec, radius) for name, spec in sorted(doc.get("gauges", {}).items())}
    numerics = Numerics(**doc.get("numerics", {}))
    return Scenario(surface, lam, pairs, sources, gauges, numerics, int(doc.get("seed", 0)))


def certify_scenario(scenario: Scenario, n_beta: int = 16, n_dir: int = 8) -> dict:
    """Strict lambda-convexity plus a nontrapping probe sweep.

    Raises
    ------
    CertificationFailed
        With the offending boundary state as witness.
    """
    conv = strict_lambda_convexity_report(scenario.surface, scenario.lam)
    if not conv["margin"] > 0:
        raise CertificationFailed(
            f"boundary is not strictly lambda-convex (margin {conv['margin']:.6g})", witness=conv["witness"]
        )
    surface, num = scenario.surface, scenario.numerics
    probes, _, _ = boundary_fan(surface, n_beta, n_dir)
    res = march_to_exit(surface, scenario.lam, probes, num.step(surface), num.cap(surface), raise_on_cap=False)
    if not np.all(res.exited):
        k = int(np.flatnonzero(~res.exited)[0])
        raise CertificationFailed("probe ray trapped until the time cap", witness=PhaseState.from_array(probes[k]))
    return {
        "convexity_margin": float(conv["margin"]),
        "convexity_witness": conv["witness"],
        "n_probe": int(probes.shape[0]),
        "max_probe_exit_time": float(np.max(res.tau)),
    }


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads ``1e-4`` (no dot) as a float."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"^[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?$|^[-+]?\.(?:inf|Inf|INF)$|^\.(?:nan|NaN|NAN)$"),
    list("-+0123456789."),
)


def load_document(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise SchemaError(f"{p}: no such file")
    try:
        doc = yaml.load(p.read_text(), Loader=_Loader)
    except yaml.YAMLError as e:
        raise SchemaError(f"{p}: {e}") from None
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise SchemaError(f"{p}: top level must be a mapping")
    return doc


def parse_scenario(path, *, certify: bool = True) -> Scenario:
    """Read, validate and (by default) certify a scenario file."""
    doc = load_document(path)
    try:
        sc = scenario_from_dict(doc, str(path))
    except SchemaError:
        raise
    except (TwistrayError, ValueError) as e:
        raise SchemaError(f"{path}: {e}") from None
    if certify:
        certify_scenario(sc)
    return sc
