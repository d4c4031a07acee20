"""Command line entry point: ``flatlas <command> <file> [options]``."""
from __future__ import annotations

import argparse
import os
import re
import sys as _sys
from fractions import Fraction

from .accessibility import make_point
from .atlas import (
    DEFAULT_RADIUS,
    AnalysisReport,
    build_atlas,
    degenerate_entry,
    generic_entry,
    point_entry,
    render_report,
    simulate_chart,
)
from .geometry import DEFAULT_SEED, lie_bracket, system_field_g
from .symbolic import ParseError, SymbolTable, parse_expr
from .sysfile import SystemFileError, load_system, split_top


class UsageError(Exception):
    pass


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="flatlas", description="Flatness analysis of control-affine systems.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("file", help="system file (or the name of a bundled example)")
    common.add_argument("--seed", type=lambda s: int(s, 0), default=None,
                        help="sampling seed (default: $FLATLAS_SEED or 0x5EED)")
    common.add_argument("--format", choices=("text", "json"), default="text")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("classify", parents=[common], help="classify a point")
    p.add_argument("--point", nargs="+", required=True, metavar="SPEC")
    p.add_argument("--budget", type=int, default=None)

    sub.add_parser("brackets", parents=[common], help="list Lie brackets of the system fields")

    p = sub.add_parser("flat-generic", parents=[common], help="first-integral flat output at a generic point")
    p.add_argument("--point", nargs="+", required=True, metavar="SPEC")
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--psi", default=None, help="comma-separated candidate components")
    p.add_argument("--candidate", default=None, help="named candidate from the file")

    p = sub.add_parser("flat-degenerate", parents=[common], help="flat output at a degenerate point")
    p.add_argument("--point", nargs="+", required=True, metavar="SPEC")
    p.add_argument("--split", default=None, help="e.g. a=1,2,b=3")
    p.add_argument("--phi", default=None, help="comma-separated candidate components")
    p.add_argument("--candidate", default=None)
    p.add_argument("--radius", type=Fraction, default=DEFAULT_RADIUS)

    p = sub.add_parser("atlas", parents=[common], help="charts over all named points")
    p.add_argument("--radius", type=Fraction, default=DEFAULT_RADIUS)

    p = sub.add_parser("simulate", parents=[common], help="numeric round trip through a chart")
    p.add_argument("--chart", required=True)
    p.add_argument("--signal", action="append", required=True,
                   help="flat-output signal in t; repeat or separate components with ';'")
    p.add_argument("--t1", type=float, default=1.0)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--radius", type=Fraction, default=DEFAULT_RADIUS)
    return ap


def parse_point_spec(sf, sys, tokens: list[str]) -> tuple[str, dict]:
    if len(tokens) == 1 and "=" not in tokens[0]:
        name = tokens[0]
        if name not in sf.points:
            raise UsageError(f"unknown point {name!r}")
        raw = sf.points[name]
        return name, make_point(sys, raw["x"], raw["u"])
    vals = {}
    for tok in tokens:
        for key, raw in re.findall(r"(x|u)=([^\s=]*?)(?=,?\s*(?:x=|u=|$))", tok):
            try:
                vals[key] = [Fraction(v) for v in raw.split(",") if v]
            except (ValueError, ZeroDivisionError) as exc:
                raise UsageError(f"bad number in {tok!r}") from exc
    if "x" not in vals:
        raise UsageError("--point needs x=...")
    try:
        pt = make_point(sys, vals["x"], vals.get("u"))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    return "cli", pt


def parse_split(text: str) -> tuple[list[int], list[int] | None]:
    m = re.fullmatch(r"\s*a=([\d,\s]+?)(?:,\s*b=([\d,\s]*))?\s*", text)
    if not m:
        raise UsageError(f"bad --split {text!r}; expected a=1,2,b=3")
    a = [int(v) for v in m.group(1).split(",") if v.strip()]
    b = [int(v) for v in m.group(2).split(",") if v.strip()] if m.group(2) is not None else None
    return a, b


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("FLATLAS_SEED")
    if env:
        try:
            return int(env, 0)
        except ValueError as exc:
            raise UsageError(f"bad FLATLAS_SEED {env!r}") from exc
    return DEFAULT_SEED


def run_command(argv: list[str]) -> tuple[int, bytes]:
    """Run one CLI invocation; returns (exit code, rendered report)."""
    ap = _parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0), b""
    fmt = getattr(args, "format", "text")
    try:
        seed = _seed(args)
        sf = load_system(args.file)
        sys = sf.system()
        report = AnalysisReport(sf.name, args.command, seed)
        code = _dispatch(args, sf, sys, report, seed)
    except FileNotFoundError as exc:
        return 2, f"error: no such system file: {exc.args[0]}\n".encode("utf-8")
    except (SystemFileError, ParseError, UsageError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        return 2, f"error: {msg}\n".encode("utf-8")
    report.exit_code = code
    return code, render_report(report, fmt)


def _dispatch(args, sf, sys, report, seed) -> int:
    cmd = args.command
    if cmd == "classify":
        name, pt = parse_point_spec(sf, sys, args.point)
        pc = point_entry(sys, name, pt, seed, report, args.budget)
        if pc.tag == "InOmegaOnly":
            degenerate_entry(sys, name, pt, report, seed=seed)
        return 0 if pc.in_omega else 1

    if cmd == "brackets":
        g = system_field_g(sys)
        fields = [sys.drift] + list(sys.controls)
        for i in range(len(fields)):
            for j in range(i + 1, len(fields)):
                report.brackets.append({"pair": f"[f{i}, f{j}]",
                                        "value": list(lie_bracket(fields[i], fields[j]).components)})
        for k, fk in enumerate(sys.controls, 1):
            report.brackets.append({"pair": f"[g, f{k}]", "value": list(lie_bracket(g, fk).components)})
        return 0

    if cmd == "flat-generic":
        name, pt = parse_point_spec(sf, sys, args.point)
        k, psi = args.k, None
        if args.candidate:
            c = sf.candidates.get(args.candidate)
            if c is None or c.kind != "generic":
                raise UsageError(f"unknown generic candidate {args.candidate!r}")
            k, psi = c.k, c.psi
        if args.psi:
            table = SymbolTable(sys.states)
            psi = [parse_expr(p, table) for p in split_top(args.psi)]
            if k is None:
                raise UsageError("--psi needs --k")
        point_entry(sys, name, pt, seed, report)
        vr = generic_entry(sys, name, pt, report, k=k, psi=psi, seed=seed)
        return 0 if vr is not None and vr.verified else 1

    if cmd == "flat-degenerate":
        name, pt = parse_point_spec(sf, sys, args.point)
        a = b = phi = None
        if args.candidate:
            c = sf.candidates.get(args.candidate)
            if c is None or c.kind != "degenerate":
                raise UsageError(f"unknown degenerate candidate {args.candidate!r}")
            a, b, phi = c.a, c.b, c.phi or None
        if args.split:
            a, b = parse_split(args.split)
        if args.phi:
            phi = split_top(args.phi)
        point_entry(sys, name, pt, seed, report)
        an = degenerate_entry(sys, name, pt, report, a=a, b=b, phi=phi, seed=seed, radius=args.radius)
        return 0 if an is not None and an.verification.verified else 1

    if cmd == "atlas":
        atlas = build_atlas(sf, report, seed, args.radius)
        return 0 if all(atlas.covers(p) for p in sf.points) and sf.points else 1

    if cmd == "simulate":
        atlas = build_atlas(sf, report, seed, args.radius)
        signals = [s.strip() for part in args.signal for s in part.split(";") if s.strip()]
        try:
            atlas.get(args.chart)
        except KeyError:
            raise UsageError(f"unknown chart {args.chart!r}")
        for s in signals:
            try:
                parse_expr(s, {"t"})
            except ParseError as exc:
                raise UsageError(f"bad signal {s!r}: {exc}") from exc
        ok = simulate_chart(sf, atlas, args.chart, signals, report, t1=args.t1, dt=args.dt, seed=seed)
        return 0 if ok else 1
    raise UsageError(f"unknown command {cmd!r}")


def main(argv: list[str] | None = None) -> int:
    code, out = run_command(list(_sys.argv[1:] if argv is None else argv))
    stream = _sys.stdout.buffer if code != 2 else _sys.stderr.buffer
    stream.write(out)
    stream.flush()
    return code


if __name__ == "__main__":
    raise SystemExit(main())
