"""Line-oriented system definition files.

Example::

    system example1
    states x1 x2 x3
    controls u1 u2
    f0 = [x2, x3, 0]
    f1 = [x1, 0, 0]
    f2 = [0, 0, 1]
    point generic: x=1,0,0, u=0,0
    candidate y: k=2, psi=[x1, x2]
    candidate ytilde: a=[2], b=[1], phi=[x1]
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path

from .geometry import ControlAffineSystem, VectorField
from .symbolic import Expr, ParseError, SymbolTable, parse_expr, render


class SystemFileError(Exception):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line, self.column = line, column
        where = ""
        if line is not None:
            where = f"line {line}" + (f", column {column}" if column is not None else "") + ": "
        super().__init__(where + message)


@dataclass
class Candidate:
    name: str
    k: int | None = None
    psi: list = field(default_factory=list)
    a: list | None = None
    b: list | None = None
    phi: list = field(default_factory=list)

    @property
    def kind(self) -> str:
        return "generic" if self.k is not None else "degenerate"


@dataclass
class SystemFile:
    name: str
    states: list
    controls: list
    drift: list                   # Exprs
    fields: list                  # list of lists of Exprs
    points: dict = field(default_factory=dict)      # name -> {"x": [...], "u": [...]}
    candidates: dict = field(default_factory=dict)  # name -> Candidate

    def system(self) -> ControlAffineSystem:
        states = tuple(self.states)
        return ControlAffineSystem(
            states, tuple(self.controls), VectorField(tuple(self.drift), states),
            tuple(VectorField(tuple(f), states) for f in self.fields), self.name)


_FIELD = re.compile(r"f(\d+)\s*=\s*\[(.*)\]\s*$")
_HEAD = re.compile(r"(point|candidate)\s+([A-Za-z_][A-Za-z0-9_]*)\s*:(.*)$")
_KEY = re.compile(r"(?:^|,)\s*([A-Za-z_]+)\s*=")


def split_top(text: str) -> list[str]:
    """Split on commas outside brackets and parentheses."""
    out, depth, cur = [], 0, []
    for ch in text:
        if ch in "([":
            depth += 1
        elif ch in ")]":
            depth -= 1
        if ch == "," and depth == 0:
            out.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    out.append("".join(cur))
    return [s.strip() for s in out]


def _keyed(body: str) -> dict:
    """``k=2, psi=[a, b]`` or ``x=1,0,0, u=0,0`` -> {key: raw value}."""
    marks = list(_KEY.finditer(body))
    out = {}
    for i, m in enumerate(marks):
        end = marks[i + 1].start() if i + 1 < len(marks) else len(body)
        out[m.group(1)] = body[m.end():end].strip().rstrip(",").strip()
    return out


def _numbers(raw: str, lineno: int) -> list[Fraction]:
    try:
        return [Fraction(v.strip()) for v in raw.split(",") if v.strip()]
    except (ValueError, ZeroDivisionError) as exc:
        raise SystemFileError(f"bad number list {raw!r}", lineno) from exc


def _bracketed(raw: str, lineno: int) -> str:
    raw = raw.strip()
    if not (raw.startswith("[") and raw.endswith("]")):
        raise SystemFileError(f"expected [...] but got {raw!r}", lineno)
    return raw[1:-1]


def _exprs(raw: str, table, lineno: int, column: int) -> list[Expr]:
    out = []
    offset = 0
    for piece in split_top(raw):
        try:
            out.append(parse_expr(piece, table))
        except ParseError as exc:
            col = column + raw.find(piece, offset) + exc.offset + 1
            raise SystemFileError(str(exc), lineno, col) from exc
        offset = raw.find(piece, offset) + len(piece)
    return out


def parse_system(text: str) -> SystemFile:
    name, states, controls = None, None, None
    raw_fields: dict = {}
    points, candidates = {}, {}
    pending: list = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        word = line.split(None, 1)[0]
        rest = line[len(word):].strip()
        if word == "system":
            name = rest or "system"
        elif word == "states":
            states = rest.split()
        elif word == "controls":
            controls = rest.split()
        elif (m := _FIELD.match(line)):
            idx = int(m.group(1))
            if idx in raw_fields:
                raise SystemFileError(f"f{idx} defined twice", lineno)
            raw_fields[idx] = (m.group(2), lineno, m.start(2))
        elif (m := _HEAD.match(line)):
            pending.append((m.group(1), m.group(2), m.group(3).strip(), lineno))
        else:
            raise SystemFileError(f"unrecognized line {line!r}", lineno)
    if states is None or controls is None:
        raise SystemFileError("missing 'states' or 'controls' declaration")
    table = SymbolTable(states)
    m = len(controls)
    if sorted(raw_fields) != list(range(m + 1)):
        raise SystemFileError(f"expected fields f0..f{m}, got {['f%d' % i for i in sorted(raw_fields)]}")
    vecs = []
    for i in range(m + 1):
        raw, ln, col = raw_fields[i]
        v = _exprs(raw, table, ln, col)
        if len(v) != len(states):
            raise SystemFileError(f"f{i} has {len(v)} components for {len(states)} states", ln)
        vecs.append(v)
    for kind, pname, body, ln in pending:
        kv = _keyed(body)
        if kind == "point":
            unknown = set(kv) - {"x", "u"}
            if unknown or "x" not in kv:
                raise SystemFileError("a point needs x=... and optionally u=...", ln)
            x = _numbers(kv["x"], ln)
            u = _numbers(kv["u"], ln) if "u" in kv else [Fraction(0)] * m
            if len(x) != len(states) or len(u) != m:
                raise SystemFileError(f"point {pname} has wrong dimensions", ln)
            points[pname] = {"x": x, "u": u}
        else:
            if "k" in kv:
                psi = _exprs(_bracketed(kv.get("psi", "[]"), ln), table, ln, 0)
                candidates[pname] = Candidate(pname, k=int(kv["k"]), psi=psi)
            elif "a" in kv:
                ext = SymbolTable(states, extra=[c for c in controls])
                a = [int(v) for v in split_top(_bracketed(kv["a"], ln)) if v]
                b = [int(v) for v in split_top(_bracketed(kv["b"], ln)) if v] if "b" in kv else None
                phi = _exprs(_bracketed(kv.get("phi", "[]"), ln), _JetTable(ext), ln, 0) if "phi" in kv else []
                candidates[pname] = Candidate(pname, a=a, b=b, phi=phi)
            else:
                raise SystemFileError("a candidate needs k=... or a=...", ln)
    try:
        sf = SystemFile(name or "system", states, controls, vecs[0], vecs[1:], points, candidates)
        sf.system()
    except Exception as exc:
        raise SystemFileError(str(exc)) from exc
    return sf


class _JetTable:
    """Accepts states, controls and their ``_d<k>`` jets."""

    def __init__(self, base: SymbolTable):
        self.base = base

    def __contains__(self, name: str) -> bool:
        if name in self.base:
            return True
        head, sep, tail = name.rpartition("_d")
        return bool(sep) and head in self.base and tail.isdigit()


def load_system(path) -> SystemFile:
    p = Path(path)
    if not p.exists():
        bundled = corpus_file(p.name)
        if bundled is None:
            raise FileNotFoundError(str(path))
        return parse_system(bundled)
    return parse_system(p.read_text(encoding="utf-8"))


def corpus_names() -> list[str]:
    root = resources.files("flatlas") / "corpus"
    return sorted(e.name for e in root.iterdir() if e.name.endswith(".sys"))


def corpus_file(name: str) -> str | None:
    f = resources.files("flatlas") / "corpus" / name
    return f.read_text(encoding="utf-8") if f.is_file() else None


def _fmt(q: Fraction) -> str:
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def _vec(exprs) -> str:
    return "[" + ", ".join(render(e) for e in exprs) + "]"


def render_system(sf: SystemFile) -> str:
    lines = [f"system {sf.name}", "states " + " ".join(sf.states), "controls " + " ".join(sf.controls)]
    for i, v in enumerate([sf.drift] + list(sf.fields)):
        lines.append(f"f{i} = {_vec(v)}")
    for pname, pt in sf.points.items():
        lines.append(f"point {pname}: x={','.join(map(_fmt, pt['x']))}, u={','.join(map(_fmt, pt['u']))}")
    for c in sf.candidates.values():
        if c.kind == "generic":
            lines.append(f"candidate {c.name}: k={c.k}, psi={_vec(c.psi)}")
        else:
            parts = [f"a=[{', '.join(map(str, c.a))}]"]
            if c.b is not None:
                parts.append(f"b=[{', '.join(map(str, c.b))}]")
            if c.phi:
                parts.append(f"phi={_vec(c.phi)}")
            lines.append(f"candidate {c.name}: " + ", ".join(parts))
    return "\n".join(lines) + "\n"
