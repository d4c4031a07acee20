"""Analysis reports and the chart registry."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

import numpy as np

from . import linalg
from .accessibility import PRUNING_CAVEAT, classify_point, make_point
from .flat_degenerate import (
    DegenerateError,
    InvolutivityError,
    analyze_degenerate,
    degenerate_round_trip,
)
from .flat_generic import FlatGenericError, analyze_generic, round_trip
from .geometry import ControlAffineSystem, lie_bracket, system_field_g
from .numeric import NumericError
from .symbolic import Expr, SymbolicError, parse_expr, render

INOMEGAONLY_WARNING = "flatness undetermined by generic test; degenerate route attempted"
DEFAULT_RADIUS = Fraction(1, 10)


def jsonable(v):
    """Plain JSON value: Fractions stay exact (ints or 'p/q' strings)."""
    if isinstance(v, Fraction):
        return v.numerator if v.denominator == 1 else f"{v.numerator}/{v.denominator}"
    if isinstance(v, Expr):
        return render(v)
    if isinstance(v, bool) or v is None or isinstance(v, (int, str)):
        return v
    if isinstance(v, (float, np.floating)):
        return float(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, Mapping):
        return {str(k): jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [jsonable(x) for x in v]
    return str(v)


@dataclass
class ChartRecord:
    id: str
    route: str                  # generic-thm3(k=..) | degenerate-thm5(a=..,b=..)
    domain: list                # predicate strings
    flat_output: list
    points: list
    status: str = "verified"

    def as_dict(self) -> dict:
        return {"id": self.id, "route": self.route, "domain": self.domain,
                "flat_output": self.flat_output, "points": self.points, "status": self.status}


class Atlas:
    """Verified charts only; a repeated (route, flat output) pair widens the chart."""

    def __init__(self):
        self.charts: list[ChartRecord] = []

    def add(self, route: str, domain: list, flat_output: list, point: str, verified: bool):
        if not verified:
            return None
        for c in self.charts:
            if c.route == route and c.flat_output == flat_output:
                for d in domain:
                    if d not in c.domain:
                        c.domain.append(d)
                if point not in c.points:
                    c.points.append(point)
                return c
        c = ChartRecord(f"chart{len(self.charts) + 1}", route, list(domain), list(flat_output), [point])
        self.charts.append(c)
        return c

    def covers(self, point: str) -> bool:
        return any(point in c.points for c in self.charts)

    def get(self, chart_id: str) -> ChartRecord:
        for c in self.charts:
            if c.id == chart_id:
                return c
        raise KeyError(chart_id)


@dataclass
class AnalysisReport:
    system: str
    command: str
    seed: int
    points: list = field(default_factory=list)
    generic: list = field(default_factory=list)
    degenerate: list = field(default_factory=list)
    brackets: list = field(default_factory=list)
    charts: list = field(default_factory=list)
    simulation: dict | None = None
    warnings: list = field(default_factory=list)
    exit_code: int = 0

    def warn(self, msg: str):
        if msg not in self.warnings:
            self.warnings.append(msg)

    def as_dict(self) -> dict:
        d = {"system": self.system, "command": self.command, "seed": self.seed,
             "exit_code": self.exit_code, "points": self.points, "generic": self.generic,
             "degenerate": self.degenerate, "brackets": self.brackets, "charts": self.charts,
             "simulation": self.simulation, "warnings": self.warnings}
        return jsonable(d)


def _text_lines(key, value, indent: int) -> list[str]:
    pad = "  " * indent
    if isinstance(value, dict):
        out = [f"{pad}{key}:"]
        for k, v in value.items():
            out.extend(_text_lines(k, v, indent + 1))
        return out
    if isinstance(value, list) and value and all(isinstance(v, dict) for v in value):
        out = [f"{pad}{key}:"]
        for v in value:
            out.append(f"{pad}  -")
            for k, x in v.items():
                out.extend(_text_lines(k, x, indent + 2))
        return out
    if isinstance(value, str):
        return [f"{pad}{key}: {value}"]
    return [f"{pad}{key}: {json.dumps(value, ensure_ascii=False)}"]


def render_report(report: AnalysisReport, fmt: str = "text") -> bytes:
    d = report.as_dict()
    if fmt == "json":
        return (json.dumps(d, indent=2, ensure_ascii=False) + "\n").encode("utf-8")
    if fmt != "text":
        raise ValueError(f"unknown format {fmt!r}")
    lines = [f"flatlas report: system {d['system']}, command {d['command']}, seed {d['seed']}"]
    for key in ("points", "generic", "degenerate", "brackets", "charts"):
        if d[key]:
            lines.extend(_text_lines(key, d[key], 0))
    if d["simulation"]:
        lines.extend(_text_lines("simulation", d["simulation"], 0))
    if not d["points"]:
        lines.append("no points analyzed")
    for w in d["warnings"]:
        lines.append(f"warning: {w}")
    lines.append(f"exit_code: {d['exit_code']}")
    return ("\n".join(lines) + "\n").encode("utf-8")


# --------------------------------------------------------------------------
# analyses feeding the report


def point_entry(sys: ControlAffineSystem, name: str, pt: dict, seed: int, report: AnalysisReport,
                budget: int | None = None):
    pc = classify_point(sys, pt, budget, seed=seed)
    t = pc.tower
    entry = {
        "name": name,
        "x": [pt[x] for x in sys.states],
        "u": [pt[u] for u in sys.control_names],
        "classification": str(pc),
        "tag": pc.tag,
        "k": pc.k,
        "generic_condition_ranks": {f"k={k}": r for k, r in pc.generic.ranks.items()},
        "gamma_ranks": t.point_ranks,
        "gamma_generic_ranks": t.generic_ranks,
        "k_star": t.k_star,
        "tower_status": "full-rank" if t.k_star is not None else (
            "stabilized-below-n" if t.stabilized else "budget-exhausted"),
    }
    report.points.append(entry)
    report.warn(PRUNING_CAVEAT)
    if pc.tag == "InOmegaOnly":
        report.warn(INOMEGAONLY_WARNING)
    if pc.tag == "OutsideOmega":
        report.warn("point fails the accessibility rank condition: candidate intrinsic singularity")
    if pc.tag == "Indeterminate":
        report.warn("tower budget exhausted; classification indeterminate")
    for note in t.notes:
        if note != PRUNING_CAVEAT:
            report.warn(note)
    return pc


def _positive_leading(e: Expr) -> Expr:
    return -e if e.num and e.num[0][1] < 0 else e


def generic_domain(sys: ControlAffineSystem, k: int) -> list[str]:
    """det(f_1, .., f_m, [g, f_k]) != 0, the locus of the generic condition."""
    g = system_field_g(sys)
    cols = list(sys.controls) + [lie_bracket(g, sys.controls[k - 1])]
    mat = [[c[i] for c in cols] for i in range(sys.n)]
    det = _positive_leading(linalg.det_expr(mat))
    return [f"{render(det)} != 0"]


def generic_entry(sys, name, pt, report, *, k=None, psi=None, seed=0):
    try:
        vr = analyze_generic(sys, pt, k, psi, seed=seed)
    except (FlatGenericError, SymbolicError, ArithmeticError) as exc:
        report.generic.append({"point": name, "verdict": "failed", "reason": str(exc)})
        return None
    mn = vr.mn
    entry = {
        "point": name,
        "k": vr.k,
        "psi": vr.psi,
        "first_integrals": vr.first_integrals.integral,
        "jacobian_rank": vr.first_integrals.jacobian_rank,
        "psi1": vr.psi1,
        "M_rank": mn.m_rank if mn else None,
        "N_rank": mn.n_rank if mn else None,
        "N_invertible": mn.n_invertible if mn else False,
        "lie_term": mn.lie_term if mn else None,
        "recovered": vr.recovered.solved if vr.recovered else {},
        "unsolved": vr.recovered.unsolved if vr.recovered else [],
        "feedback_linearizable": vr.linearization.passed if vr.linearization else None,
        "verdict": vr.verdict,
    }
    report.generic.append(entry)
    for note in vr.notes:
        report.warn(note)
    return vr


def degenerate_entry(sys, name, pt, report, *, a=None, b=None, phi=None, seed=0,
                     radius=DEFAULT_RADIUS):
    base = {"point": name}
    try:
        an = analyze_degenerate(sys, pt, a=a, b=b, candidates=phi or None, seed=seed, radius=radius)
    except InvolutivityError as exc:
        report.degenerate.append({**base, "verdict": "aborted", "reason": "not involutive",
                                  "level": exc.level, "witness": list(exc.witness.components),
                                  "pair": [i + 1 for i in exc.pair]})
        return None
    except (DegenerateError, SymbolicError, ArithmeticError) as exc:
        report.degenerate.append({**base, "verdict": "failed", "reason": str(exc)})
        return None
    t, dfo, ver = an.tower, an.flat_output, an.verification
    if not an.split.spans:
        report.warn(f"split {an.split} does not span the control distribution at {name}")
    entry = {
        **base,
        "split": {"a": list(an.split.a), "b": list(an.split.b), "p": an.split.p},
        "jet_order": t.frame.K,
        "tower_ranks": t.ranks,
        "rank_jumps": t.rank_jumps,
        "brunovsky_indices": t.indices,
        "permutation": t.permutation,
        "flat_output": [render(c) for c in dfo.components],
        "delta": dfo.delta,
        "ua_free": {f"z{i}^({o})": v for (i, o), v in ver.ua_free.items()},
        "chain_identity": ver.chain_identity,
        "delta_invertible": ver.delta_invertible,
        "recovered_ua": ver.recovered_ua,
        "verdict": "flat-output-verified" if ver.verified else "verification-failed",
    }
    report.degenerate.append(entry)
    for note in t.notes + ver.notes:
        report.warn(note)
    return an


def degenerate_domain(an, sys, pt, radius) -> list[str]:
    det = linalg.det_expr(an.flat_output.delta)
    box = ", ".join(f"|{x} - {jsonable(pt[x])}| <= {jsonable(radius)}" for x in sys.states)
    out = [f"box({box})"]
    if not det.is_constant():
        out.append(f"{render(_positive_leading(det))} != 0")
    return out


def build_atlas(sf, report: AnalysisReport, seed: int, radius=DEFAULT_RADIUS) -> Atlas:
    """Both routes over every named point of a system file."""
    sys = sf.system()
    atlas = Atlas()
    gen_cands = [c for c in sf.candidates.values() if c.kind == "generic"]
    deg_cands = [c for c in sf.candidates.values() if c.kind == "degenerate"]
    for name, raw in sf.points.items():
        pt = make_point(sys, raw["x"], raw["u"])
        pc = point_entry(sys, name, pt, seed, report)
        covered = False
        if pc.tag == "InOmega0" and sys.m == sys.n - 1:
            tries = [c for c in gen_cands if c.k == pc.k] or [None]
            for c in tries:
                vr = generic_entry(sys, name, pt, report, k=pc.k, psi=c.psi if c else None, seed=seed)
                if vr is not None and vr.verified:
                    out = [render(p) for p in vr.psi]
                    atlas.add(f"generic-thm3(k={vr.k})", generic_domain(sys, vr.k), out, name, True)
                    covered = True
                    break
        if not covered and pc.tag in ("InOmega0", "InOmegaOnly"):
            tries = deg_cands or [None]
            for c in tries:
                an = degenerate_entry(sys, name, pt, report, a=c.a if c else None,
                                      b=c.b if c else None, phi=c.phi if c else None,
                                      seed=seed, radius=radius)
                if an is not None and an.verification.verified:
                    sp = an.split
                    route = f"degenerate-thm5(a={list(sp.a)},b={list(sp.b)})"
                    out = [render(e) for e in an.flat_output.components]
                    atlas.add(route, degenerate_domain(an, sys, pt, radius), out, name, True)
                    covered = True
                    break
        if not covered:
            report.warn(f"point {name} is not covered by a verified chart")
    report.charts = [c.as_dict() for c in atlas.charts]
    return atlas


def simulate_chart(sf, atlas: Atlas, chart_id: str, signals: list[str], report: AnalysisReport,
                   *, t1: float = 1.0, dt: float = 1e-3, tol: float = 1e-4, seed: int = 0) -> bool:
    sys = sf.system()
    chart = atlas.get(chart_id)
    raw = sf.points[chart.points[0]]
    pt = make_point(sys, raw["x"], raw["u"])
    exprs = [parse_expr(s, {"t"}) for s in signals]
    info = {"chart": chart_id, "signals": signals, "t_span": [0.0, t1], "dt": dt}
    try:
        if chart.route.startswith("generic"):
            k = int(chart.route.split("k=")[1].rstrip(")"))
            psi = [parse_expr(p) for p in chart.flat_output]
            if len(exprs) != len(psi):
                raise ValueError(f"chart needs {len(psi)} signals")
            guess = {**{x: float(pt[x]) for x in sys.states},
                     **{u: float(pt[u]) for u in sys.control_names}}
            rt = round_trip(sys, k, psi, exprs, (0.0, t1), guess=guess, dt=dt)
            err, res = rt.z_error, rt.recovery.max_residual
        else:
            a_part = chart.route.split("a=")[1].split("],b=")[0].strip("[")
            b_part = chart.route.split("b=")[1].rstrip(")").strip("[]")
            a = [int(v) for v in a_part.split(",") if v.strip()]
            b = [int(v) for v in b_part.split(",") if v.strip()]
            an = analyze_degenerate(sys, pt, a=a, b=b, seed=seed)
            nz = len(an.flat_output.phi0)
            if len(exprs) != nz + len(b):
                raise ValueError(f"chart needs {nz + len(b)} signals (z then u_b)")
            x0 = [float(pt[x]) for x in sys.states]
            rt = degenerate_round_trip(sys, an.flat_output, exprs[:nz], exprs[nz:], (0.0, t1),
                                       x_guess=x0, dt=dt)
            err, res = rt.z_error, rt.max_residual
    except (NumericError, FlatGenericError, DegenerateError, ValueError) as exc:
        report.simulation = {**info, "verdict": "failed", "reason": str(exc)}
        return False
    ok = err < tol
    report.simulation = {**info, "z_error": err, "max_newton_residual": res,
                         "tolerance": tol, "verdict": "passed" if ok else "failed"}
    return ok
