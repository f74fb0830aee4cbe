"""Command line entry point.

Exit codes: 0 all checks pass, 1 tolerance or runtime failure,
2 certification failure, 3 configuration error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys

from .config import certify_scenario, parse_scenario
from .errors import CertificationFailed, SchemaError, TwistrayError
from .export import run_export
from .verify import SUITES, run_verify

EXIT_OK, EXIT_FAIL, EXIT_CERT, EXIT_CONFIG = 0, 1, 2, 3


def _fan(text: str):
    try:
        a, b = text.lower().split("x")
        return int(a), int(b)
    except ValueError:
        raise argparse.ArgumentTypeError(f"fan must look like 64x32, got {text!r}") from None


def _floats(n):
    def parse(text):
        try:
            vals = tuple(float(v) for v in text.split(","))
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected {n} comma-separated numbers, got {text!r}") from None
        if len(vals) != n:
            raise argparse.ArgumentTypeError(f"expected {n} comma-separated numbers, got {text!r}")
        return vals

    return parse


def _clean(o):
    if isinstance(o, float) and not math.isfinite(o):
        return str(o)
    if isinstance(o, dict):
        return {str(k): _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    if hasattr(o, "as_array"):
        return [float(v) for v in o.as_array()]
    if hasattr(o, "item"):
        return _clean(o.item())
    return o


def _emit(report, args):
    text = json.dumps(_clean(report), sort_keys=True, indent=2)
    if args.out and args.command in ("verify", "certify"):
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    if args.json:
        print(text)
    elif not args.out:
        if "checks" in report:
            failed = sum(not e["pass"] for e in report["checks"])
            print(f"{len(report['checks'])} checks, {failed} failed")
        elif report.get("certified"):
            print(f"certified: convexity margin {report['convexity_margin']:.4g}, "
                  f"longest probe exit time {report['max_probe_exit_time']:.4g}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="twistray", description="Twisted ray transforms on conformal disks.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, help="scenario file (YAML or JSON)")
        sp.add_argument("--seed", type=int, help="override the scenario seed")
        sp.add_argument("--step", type=float, help="override the RK4 step")
        sp.add_argument("--json", action="store_true", help="print the report as JSON")
        sp.add_argument("--out", help="output path")

    v = sub.add_parser("verify", help="run verification suites")
    common(v)
    v.add_argument("--suite", default=",".join(SUITES), help="comma-separated suites")
    v.add_argument("--fan", type=_fan, default=(8, 8), help="verification fan, e.g. 8x8")

    c = sub.add_parser("certify", help="check convexity and nontrapping of the scenario")
    common(c)

    for name, helptext in (("scatter", "export scattering data"), ("transform", "export attenuated transforms")):
        e = sub.add_parser(name, help=helptext)
        common(e)
        e.add_argument("--fan", type=_fan, default=(64, 32))
        e.add_argument("--pair")
        if name == "transform":
            e.add_argument("--source")

    t = sub.add_parser("trace", help="export one lambda-geodesic")
    common(t)
    t.add_argument("--state", type=_floats(3), help="x,y,theta (default: leftmost boundary point, theta=0)")

    f = sub.add_parser("factorize", help="export loop factorizations at base points")
    common(f)
    f.add_argument("--pair")
    f.add_argument("--point", type=_floats(2), action="append", help="x,y (repeatable)")

    m = sub.add_parser("modes", help="export fiber modes of a transport solution")
    common(m)
    m.add_argument("--pair")
    m.add_argument("--source")
    m.add_argument("--point", type=_floats(2), help="x,y")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        sc = parse_scenario(args.config, certify=False)
        if args.seed is not None:
            sc = dataclasses.replace(sc, seed=args.seed)
        if args.step is not None:
            sc = sc.with_numerics(h=args.step)
    except SchemaError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cert = certify_scenario(sc)
    except CertificationFailed as e:
        _emit({"certified": False, "error": str(e), "witness": e.witness}, args)
        print(f"certification failed: {e}", file=sys.stderr)
        return EXIT_CERT
    if args.command == "certify":
        _emit({"certified": True, **cert}, args)
        return EXIT_OK
    try:
        if args.command == "verify":
            suites = [s.strip() for s in args.suite.split(",") if s.strip()]
            code, report = run_verify(sc, suites, fan=args.fan)
            report["certification"] = cert
            _emit(report, args)
            for e in report["checks"]:
                if not e["pass"]:
                    print(f"FAIL {e['suite']}/{e['check']}: {e.get('error', e.get('residual'))}", file=sys.stderr)
            return code
        if not args.out:
            print("--out is required for exports", file=sys.stderr)
            return EXIT_CONFIG
        kw = {}
        if args.command in ("scatter", "transform"):
            kw["fan"] = args.fan
        if hasattr(args, "pair"):
            kw["pair"] = args.pair
        if hasattr(args, "source"):
            kw["source"] = args.source
        if args.command == "trace":
            kw["state"] = args.state
        if args.command == "factorize" and args.point:
            kw["points"] = args.point
        if args.command == "modes" and args.point:
            kw["points"] = [args.point]
        summary = run_export(sc, args.command, args.out, **kw)
        _emit(summary, args)
        return EXIT_OK if summary.get("pass", True) else EXIT_FAIL
    except KeyError as e:
        print(f"configuration error: {e.args[0]}", file=sys.stderr)
        return EXIT_CONFIG
    except (TwistrayError, ValueError) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
