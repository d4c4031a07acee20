"""Exact symbolic scalar expressions.

An :class:`Expr` is stored in a canonical rational-function form: a numerator
and a denominator, each a sparse polynomial with :class:`fractions.Fraction`
coefficients over *atoms*.  Atoms are plain variables or applications of one
of the whitelisted elementary functions (``sin``, ``cos``, ``exp``, ``ln``,
``sqrt``) to a canonical argument.

Canonicalization is deliberately bounded: like terms are collected, constants
folded, monomial gcds cancelled between numerator and denominator, exact
polynomial division is attempted, and the denominator is made monic.  No
multivariate factorization is attempted.  For expressions without function
atoms this is already enough to decide ``e == 0`` exactly (a rational function
is zero iff its expanded numerator is); expressions with function atoms fall
back to sampling in :func:`is_zero`.
"""
from __future__ import annotations

import math
import random
import re
from fractions import Fraction
from functools import cmp_to_key
from typing import Iterable, Mapping

Rational = Fraction

FUNCTIONS = ("sin", "cos", "exp", "ln", "sqrt")

ZERO_TEST_SEED = 0x5EED
ZERO_TEST_SAMPLES = 25
ZERO_TEST_ATTEMPTS = 200


class SymbolicError(Exception):
    pass


class ParseError(SymbolicError):
    """Syntax error; ``offset`` is the byte offset into the UTF-8 source."""

    def __init__(self, message: str, offset: int, text: str = ""):
        self.offset = offset
        self.text = text
        super().__init__(f"{message} at byte {offset}")


class UnknownSymbolError(ParseError):
    pass


class EvaluationError(SymbolicError):
    pass


class DivisionByZeroError(EvaluationError):
    pass


class TranscendentalError(EvaluationError):
    """Raised when exact evaluation meets a function atom."""


class UnboundSymbolError(EvaluationError):
    pass


def _natural_key(name: str) -> tuple:
    parts = re.split(r"(\d+)", name)
    return tuple((0, int(p)) if p.isdigit() else (1, p) for p in parts if p)


# --------------------------------------------------------------------------
# atoms and monomials


class Atom:
    __slots__ = ()


class Var(Atom):
    __slots__ = ("name", "key", "_hash")

    def __init__(self, name: str):
        self.name = name
        self.key = (0, _natural_key(name))
        self._hash = hash(("var", name))

    def __eq__(self, other):
        return isinstance(other, Var) and other.name == self.name

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"Var({self.name!r})"


class Fn(Atom):
    __slots__ = ("func", "arg", "key", "_hash")

    def __init__(self, func: str, arg: "Expr"):
        if func not in FUNCTIONS:
            raise SymbolicError(f"unknown function {func!r}")
        self.func = func
        self.arg = arg
        self.key = (1, func, arg.sort_key())
        self._hash = hash(("fn", func, arg))

    def __eq__(self, other):
        return isinstance(other, Fn) and other.func == self.func and other.arg == self.arg

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"Fn({self.func!r}, {self.arg})"


Mono = tuple  # tuple[(Atom, int), ...] sorted by atom key
ONE_MONO: Mono = ()


def _mono_mul(a: Mono, b: Mono) -> Mono:
    if not a:
        return b
    if not b:
        return a
    out = []
    i = j = 0
    while i < len(a) and j < len(b):
        (xa, ea), (xb, eb) = a[i], b[j]
        if xa == xb:
            out.append((xa, ea + eb))
            i += 1
            j += 1
        elif xa.key < xb.key:
            out.append(a[i])
            i += 1
        else:
            out.append(b[j])
            j += 1
    out.extend(a[i:])
    out.extend(b[j:])
    return tuple(out)


def _mono_div(a: Mono, b: Mono) -> Mono | None:
    """a / b when b divides a, else None."""
    da = dict(a)
    for x, e in b:
        have = da.get(x, 0)
        if have < e:
            return None
        if have == e:
            del da[x]
        else:
            da[x] = have - e
    return tuple(sorted(da.items(), key=lambda xe: xe[0].key))


def _mono_deg(m: Mono) -> int:
    return sum(e for _, e in m)


def _mono_cmp(a: Mono, b: Mono) -> int:
    """Graded lex; atoms earlier in the symbol order weigh more."""
    da, db = _mono_deg(a), _mono_deg(b)
    if da != db:
        return -1 if da < db else 1
    for (xa, ea), (xb, eb) in zip(a, b):
        if xa == xb:
            if ea != eb:
                return -1 if ea < eb else 1
            continue
        return 1 if xa.key < xb.key else -1
    if len(a) != len(b):
        return 1 if len(a) > len(b) else -1
    return 0


_MONO_KEY = cmp_to_key(_mono_cmp)


# --------------------------------------------------------------------------
# polynomial helpers on {mono: Fraction}


def _padd(p: dict, q: dict, scale: Fraction = Fraction(1)) -> dict:
    out = dict(p)
    for m, c in q.items():
        v = out.get(m, 0) + scale * c
        if v:
            out[m] = v
        else:
            out.pop(m, None)
    return out


def _pmul(p: dict, q: dict) -> dict:
    if len(p) < len(q):
        p, q = q, p
    out: dict = {}
    for mq, cq in q.items():
        for mp, cp in p.items():
            m = _mono_mul(mp, mq)
            v = out.get(m, 0) + cp * cq
            if v:
                out[m] = v
            else:
                out.pop(m, None)
    return out


def _pscale(p: dict, c: Fraction) -> dict:
    if not c:
        return {}
    return {m: v * c for m, v in p.items()}


def _leading(p: dict) -> tuple:
    m = max(p, key=_MONO_KEY)
    return m, p[m]


def _pdivexact(p: dict, d: dict, max_steps: int = 2000) -> dict | None:
    """Exact multivariate division p / d, or None when d does not divide p."""
    if not d:
        raise ZeroDivisionError
    lm_d, lc_d = _leading(d)
    q: dict = {}
    r = dict(p)
    steps = 0
    while r:
        steps += 1
        if steps > max_steps:
            return None
        lm_r, lc_r = _leading(r)
        m = _mono_div(lm_r, lm_d)
        if m is None:
            return None
        c = lc_r / lc_d
        q[m] = q.get(m, 0) + c
        r = _padd(r, _pmul({m: Fraction(1)}, d), -c)
    return q


def _mono_gcd(p: dict) -> Mono:
    it = iter(p)
    g = dict(next(it))
    for m in it:
        dm = dict(m)
        for x in list(g):
            e = min(g[x], dm.get(x, 0))
            if e:
                g[x] = e
            else:
                del g[x]
        if not g:
            break
    return tuple(sorted(g.items(), key=lambda xe: xe[0].key))


def _is_const(p: dict) -> bool:
    return not p or (len(p) == 1 and ONE_MONO in p)


def _freeze(p: dict) -> tuple:
    return tuple(sorted(p.items(), key=lambda mc: _MONO_KEY(mc[0]), reverse=True))


# --------------------------------------------------------------------------
# Expr


class Expr:
    """Immutable canonical rational function over atoms."""

    __slots__ = ("num", "den", "_hash", "_atoms", "_skey")

    def __init__(self, num: tuple, den: tuple):
        # callers go through _make; num/den are frozen term tuples
        self.num = num
        self.den = den
        self._hash = None
        self._atoms = None
        self._skey = None

    # construction ---------------------------------------------------------
    @staticmethod
    def _make(num: dict, den: dict | None = None) -> "Expr":
        if den is None or _is_const(den):
            c = den[ONE_MONO] if den else Fraction(1)
            if c != 1:
                num = _pscale(num, 1 / c)
            return Expr(_freeze(num), ((ONE_MONO, Fraction(1)),))
        if not num:
            return ZERO
        g_den = dict(_mono_gcd(den))
        common = tuple((x, min(e, g_den[x])) for x, e in _mono_gcd(num) if x in g_den)
        if common:
            num = {_mono_div(m, common): c for m, c in num.items()}
            den = {_mono_div(m, common): c for m, c in den.items()}
            if _is_const(den):
                return Expr._make(num, den)
        q = _pdivexact(num, den)
        if q is not None:
            return Expr._make(q)
        _, lc = _leading(den)
        if lc != 1:
            num = _pscale(num, 1 / lc)
            den = _pscale(den, 1 / lc)
        return Expr(_freeze(num), _freeze(den))

    @staticmethod
    def const(value) -> "Expr":
        q = Fraction(value)
        return Expr._make({ONE_MONO: q} if q else {})

    @staticmethod
    def symbol(name: str) -> "Expr":
        return Expr._make({((Var(name), 1),): Fraction(1)})

    @staticmethod
    def apply(func: str, arg: "Expr") -> "Expr":
        arg = as_expr(arg)
        if arg.is_constant():
            c = arg.constant_value()
            folded = {("sin", 0): ZERO, ("cos", 0): ONE, ("exp", 0): ONE,
                      ("ln", 1): ZERO, ("sqrt", 0): ZERO, ("sqrt", 1): ONE}
            if (func, c) in folded:
                return folded[(func, c)]
        return Expr._make({((Fn(func, arg), 1),): Fraction(1)})

    # basic queries --------------------------------------------------------
    def _num_dict(self) -> dict:
        return dict(self.num)

    def _den_dict(self) -> dict:
        return dict(self.den)

    def is_zero_canonical(self) -> bool:
        return not self.num

    def is_polynomial(self) -> bool:
        return len(self.den) == 1 and self.den[0][0] == ONE_MONO

    def is_constant(self) -> bool:
        return self.is_polynomial() and all(m == ONE_MONO for m, _ in self.num)

    def constant_value(self) -> Fraction:
        if not self.is_constant():
            raise SymbolicError("not a constant")
        return self.num[0][1] if self.num else Fraction(0)

    def atoms(self) -> frozenset:
        if self._atoms is None:
            s = set()
            for part in (self.num, self.den):
                for m, _ in part:
                    for x, _ in m:
                        s.add(x)
            self._atoms = frozenset(s)
        return self._atoms

    def has_functions(self) -> bool:
        return any(isinstance(a, Fn) for a in self.atoms())

    @property
    def free_symbols(self) -> frozenset:
        out = set()
        for a in self.atoms():
            if isinstance(a, Var):
                out.add(a.name)
            else:
                out |= a.arg.free_symbols
        return frozenset(out)

    def depends_on(self, name: str) -> bool:
        return name in self.free_symbols

    def degree(self) -> int:
        """Total degree of the numerator (used for basis tie-breaking)."""
        return max((_mono_deg(m) for m, _ in self.num), default=0)

    def sort_key(self) -> tuple:
        if self._skey is None:
            def part(p):
                return tuple((tuple((x.key, e) for x, e in m), c) for m, c in p)
            self._skey = (part(self.num), part(self.den))
        return self._skey

    # equality / hashing ---------------------------------------------------
    def __eq__(self, other):
        if not isinstance(other, Expr):
            try:
                other = as_expr(other)
            except TypeError:
                return NotImplemented
        return self.num == other.num and self.den == other.den

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self.num, self.den))
        return self._hash

    # arithmetic -----------------------------------------------------------
    def __add__(self, other):
        other = as_expr(other)
        if not other.num:
            return self
        if not self.num:
            return other
        if self.den == other.den:
            return Expr._make(_padd(self._num_dict(), other._num_dict()), self._den_dict())
        n = _padd(
            _pmul(self._num_dict(), other._den_dict()),
            _pmul(other._num_dict(), self._den_dict()),
        )
        return Expr._make(n, _pmul(self._den_dict(), other._den_dict()))

    __radd__ = __add__

    def __neg__(self):
        return Expr(tuple((m, -c) for m, c in self.num), self.den)

    def __sub__(self, other):
        return self + (-as_expr(other))

    def __rsub__(self, other):
        return as_expr(other) + (-self)

    def __mul__(self, other):
        other = as_expr(other)
        if not self.num or not other.num:
            return ZERO
        if other.is_constant():
            c = other.constant_value()
            if c == 1:
                return self
            return Expr(tuple((m, v * c) for m, v in self.num), self.den)
        if self.is_constant():
            return other * self
        if self.is_polynomial() and other.is_polynomial():
            return Expr._make(_pmul(self._num_dict(), other._num_dict()))
        return Expr._make(
            _pmul(self._num_dict(), other._num_dict()),
            _pmul(self._den_dict(), other._den_dict()),
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_expr(other)
        if not other.num:
            raise ZeroDivisionError("division by a canonically zero expression")
        if other.is_constant():
            return self * (1 / other.constant_value())
        return Expr._make(
            _pmul(self._num_dict(), other._den_dict()),
            _pmul(self._den_dict(), other._num_dict()),
        )

    def __rtruediv__(self, other):
        return as_expr(other) / self

    def __pow__(self, k: int):
        if not isinstance(k, int):
            raise SymbolicError("only integer exponents are supported")
        if k < 0:
            return ONE / (self ** (-k))
        result = ONE
        base = self
        while k:
            if k & 1:
                result = result * base
            base = base * base if k > 1 else base
            k >>= 1
        return result

    # rendering ------------------------------------------------------------
    def __str__(self):
        return render(self)

    def __repr__(self):
        return f"Expr({render(self)!r})"

    def to_tree(self):
        return to_tree(self)


def as_expr(value) -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, (int, Fraction)):
        return Expr.const(value)
    if isinstance(value, float):
        return Expr.const(Fraction(value).limit_denominator(10**12))
    if isinstance(value, str):
        return parse_expr(value)
    raise TypeError(f"cannot convert {type(value).__name__} to Expr")


ZERO = Expr((), ((ONE_MONO, Fraction(1)),))
ONE = Expr(((ONE_MONO, Fraction(1)),), ((ONE_MONO, Fraction(1)),))


def symbols(names: str | Iterable[str]) -> list[Expr]:
    if isinstance(names, str):
        names = names.replace(",", " ").split()
    return [Expr.symbol(n) for n in names]


def sin(e) -> Expr:
    return Expr.apply("sin", as_expr(e))


def cos(e) -> Expr:
    return Expr.apply("cos", as_expr(e))


def exp(e) -> Expr:
    return Expr.apply("exp", as_expr(e))


def ln(e) -> Expr:
    return Expr.apply("ln", as_expr(e))


def sqrt(e) -> Expr:
    return Expr.apply("sqrt", as_expr(e))


# --------------------------------------------------------------------------
# symbol table


class SymbolTable:
    """Ordered, unique names for states, controls and control jets.

    Jet coordinates are named ``<control>_d<k>`` for k >= 1; ``k = 0`` is the
    control itself.
    """

    def __init__(self, states: Iterable[str], controls: Iterable[str] = (),
                 jet_order: int = 0, extra: Iterable[str] = ()):
        self.states = tuple(states)
        self.controls = tuple(controls)
        self.jet_order = jet_order
        jets = tuple(jet_name(u, k) for k in range(1, jet_order + 1) for u in self.controls)
        self.names = self.states + self.controls + jets + tuple(extra)
        if len(set(self.names)) != len(self.names):
            raise SymbolicError("duplicate symbol names")
        self._index = {n: i for i, n in enumerate(self.names)}

    def __contains__(self, name: str) -> bool:
        return name in self._index

    def index(self, name: str) -> int:
        return self._index[name]

    def __iter__(self):
        return iter(self.names)

    def __len__(self):
        return len(self.names)


def jet_name(control: str, order: int) -> str:
    return control if order == 0 else f"{control}_d{order}"


# --------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+\.\d*|\.\d+|\d+)|(?P<id>[A-Za-z_][A-Za-z0-9_]*)|(?P<op>[-+*/^(),]))"
)


class _Parser:
    def __init__(self, text: str, table):
        self.text = text
        self.table = table
        self.tokens = []
        pos = 0
        while True:
            while pos < len(text) and text[pos].isspace():
                pos += 1
            if pos >= len(text):
                break
            m = _TOKEN.match(text, pos)
            if not m or m.end() == pos:
                self.error(f"unexpected character {text[pos]!r}", pos)
            kind = m.lastgroup
            self.tokens.append((kind, m.group(kind), m.start(kind)))
            pos = m.end()
        self.tokens.append(("end", "", len(text)))
        self.i = 0

    def error(self, message, pos, cls=ParseError):
        raise cls(message, len(self.text[:pos].encode("utf-8")), self.text)

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, text, pos = self.take()
        if text != value or kind == "end":
            self.error(f"expected {value!r}", pos)

    def parse(self) -> Expr:
        e = self.expr()
        kind, text, pos = self.peek()
        if kind != "end":
            self.error(f"unexpected token {text!r}", pos)
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            t = self.term()
            e = e + t if op == "+" else e - t
        return e

    def term(self) -> Expr:
        e = self.factor()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op, pos = self.take()[1], self.peek()[2]
            f = self.factor()
            if op == "*":
                e = e * f
            else:
                if f.is_zero_canonical():
                    self.error("zero denominator", pos, cls=ParseError)
                e = e / f
        return e

    def factor(self) -> Expr:
        kind, text, pos = self.peek()
        if kind == "op" and text in ("-", "+"):
            self.take()
            f = self.factor()
            return -f if text == "-" else f
        base = self.atom()
        if self.peek()[1] == "^":
            self.take()
            sign = 1
            if self.peek()[1] in ("-", "+"):
                sign = -1 if self.take()[1] == "-" else 1
            kind, text, pos = self.take()
            if kind != "num" or not text.isdigit():
                self.error("integer exponent expected", pos)
            k = sign * int(text)
            if k < 0 and base.is_zero_canonical():
                self.error("zero denominator", pos)
            base = base ** k
        return base

    def atom(self) -> Expr:
        kind, text, pos = self.take()
        if kind == "num":
            return Expr.const(Fraction(text))
        if kind == "id":
            if text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Expr.apply(text, arg)
            if self.table is not None and text not in self.table:
                self.error(f"unknown identifier {text!r}", pos, cls=UnknownSymbolError)
            return Expr.symbol(text)
        if text == "(":
            e = self.expr()
            self.expect(")")
            return e
        if kind == "end":
            self.error("unexpected end of input", pos)
        self.error(f"unexpected token {text!r}", pos)


def parse_expr(text: str, table=None) -> Expr:
    """Parse ``text`` into a canonical :class:`Expr`.

    ``table`` may be a :class:`SymbolTable` or any container of names; when
    given, every identifier must resolve in it.
    """
    return _Parser(text, table).parse()


# --------------------------------------------------------------------------
# rendering


def _fmt_rational(q: Fraction) -> str:
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def _render_atom(a: Atom) -> str:
    if isinstance(a, Var):
        return a.name
    return f"{a.func}({render(a.arg)})"


def _render_poly(terms: tuple) -> str:
    if not terms:
        return "0"
    out = []
    for idx, (m, c) in enumerate(terms):
        neg = c < 0
        a = -c if neg else c
        factors = [_render_atom(x) + (f"^{e}" if e > 1 else "") for x, e in m]
        if not factors:
            body = _fmt_rational(a)
        elif a == 1:
            body = "*".join(factors)
        else:
            body = "*".join([_fmt_rational(a)] + factors)
        if idx == 0:
            out.append(("-" if neg else "") + body)
        else:
            out.append((" - " if neg else " + ") + body)
    return "".join(out)


def render(e: Expr) -> str:
    """Text in the input grammar; ``parse_expr(render(e)) == e``."""
    num = _render_poly(e.num)
    if e.is_polynomial():
        return num
    den = _render_poly(e.den)
    (m0, c0), = e.den if len(e.den) == 1 else (((), 0),)
    if not (len(e.den) == 1 and c0 == 1 and len(m0) == 1 and m0[0][1] == 1):
        den = f"({den})"
    if len(e.num) > 1 or (e.num and e.num[0][1] < 0):
        num = f"({num})"
    return f"{num}/{den}"


def _tree_poly(terms: tuple):
    def tree_atom(x):
        return x.name if isinstance(x, Var) else ("Apply", x.func, to_tree(x.arg))

    def tree_term(m, c):
        factors = [tree_atom(x) if e == 1 else ("Power", tree_atom(x), e) for x, e in m]
        if not factors:
            return c
        if c != 1:
            factors.insert(0, c)
        return factors[0] if len(factors) == 1 else ("Product", *factors)

    if not terms:
        return Fraction(0)
    if len(terms) == 1:
        return tree_term(*terms[0])
    return ("Sum", *(tree_term(m, c) for m, c in terms))


def to_tree(e: Expr):
    """Node view: nested tuples tagged Sum/Product/Power/Quotient/Apply.

    Variables appear as their names and constants as Fractions.
    """
    if e.is_polynomial():
        return _tree_poly(e.num)
    return ("Quotient", _tree_poly(e.num), _tree_poly(e.den))


# --------------------------------------------------------------------------
# calculus and substitution


def differentiate(e: Expr, v: str) -> Expr:
    """Exact partial derivative of ``e`` with respect to the symbol ``v``."""
    e = as_expr(e)
    if v not in e.free_symbols:
        return ZERO
    dn = _dpoly(e.num, v)
    if e.is_polynomial():
        return dn
    den = Expr._make(e._den_dict())
    num = Expr._make(e._num_dict())
    dd = _dpoly(e.den, v)
    return (dn * den - num * dd) / (den * den)


def _datom(a: Atom, v: str) -> Expr:
    if isinstance(a, Var):
        return ONE if a.name == v else ZERO
    darg = differentiate(a.arg, v)
    if darg.is_zero_canonical():
        return ZERO
    arg = a.arg
    if a.func == "sin":
        outer = cos(arg)
    elif a.func == "cos":
        outer = -sin(arg)
    elif a.func == "exp":
        outer = exp(arg)
    elif a.func == "ln":
        outer = ONE / arg
    else:
        outer = ONE / (2 * sqrt(arg))
    return outer * darg


def _dpoly(terms: tuple, v: str) -> Expr:
    poly: dict = {}
    extra = ZERO
    cache: dict = {}
    for m, c in terms:
        for idx, (x, e) in enumerate(m):
            if isinstance(x, Var):
                if x.name != v:
                    continue
                rest = m[:idx] + (((x, e - 1),) if e > 1 else ()) + m[idx + 1:]
                poly[rest] = poly.get(rest, 0) + c * e
            else:
                if x not in cache:
                    cache[x] = _datom(x, v)
                dx = cache[x]
                if dx.is_zero_canonical():
                    continue
                rest = m[:idx] + (((x, e - 1),) if e > 1 else ()) + m[idx + 1:]
                extra = extra + Expr._make({rest: c * e}) * dx
    poly = {m: c for m, c in poly.items() if c}
    return Expr._make(poly) + extra


def gradient(e: Expr, names: Iterable[str]) -> list[Expr]:
    return [differentiate(e, n) for n in names]


def subs(e: Expr, mapping: Mapping[str, object]) -> Expr:
    """Substitute symbols by expressions (or numbers) and re-canonicalize."""
    e = as_expr(e)
    if not (e.free_symbols & set(mapping)):
        return e
    repl = {k: as_expr(v) for k, v in mapping.items()}
    atom_cache: dict = {}

    def atom_value(x: Atom) -> Expr:
        if x not in atom_cache:
            if isinstance(x, Var):
                atom_cache[x] = repl.get(x.name, Expr.symbol(x.name))
            else:
                atom_cache[x] = Expr.apply(x.func, subs(x.arg, repl))
        return atom_cache[x]

    def poly_value(terms) -> Expr:
        total = ZERO
        for m, c in terms:
            t = Expr.const(c)
            for x, k in m:
                t = t * atom_value(x) ** k
            total = total + t
        return total

    num = poly_value(e.num)
    if e.is_polynomial():
        return num
    return num / poly_value(e.den)


# --------------------------------------------------------------------------
# evaluation


def _eval_poly_exact(terms, values: dict) -> Fraction:
    total = Fraction(0)
    for m, c in terms:
        t = c
        for x, e in m:
            t *= values[x] ** e
        total += t
    return total


def evaluate(e: Expr, point: Mapping[str, object]) -> Fraction:
    """Exact rational value of ``e`` at ``point``."""
    e = as_expr(e)
    values = {}
    for x in e.atoms():
        if isinstance(x, Fn):
            raise TranscendentalError(
                f"{x.func}(...) cannot be evaluated exactly; use evaluate_float"
            )
        if x.name not in point:
            raise UnboundSymbolError(f"symbol {x.name!r} is not bound")
        values[x] = Fraction(point[x.name])
    den = _eval_poly_exact(e.den, values)
    if den == 0:
        raise DivisionByZeroError(f"denominator of {render(e)} vanishes at the point")
    return _eval_poly_exact(e.num, values) / den


_FLOAT_FUNCS = {"sin": math.sin, "cos": math.cos, "exp": math.exp,
                "ln": math.log, "sqrt": math.sqrt}


def evaluate_float(e: Expr, point: Mapping[str, float]) -> float:
    """Double-precision value of ``e``; NaN/inf and domain errors raise."""
    e = as_expr(e)
    cache: dict = {}

    def atom_value(x):
        if x not in cache:
            if isinstance(x, Var):
                if x.name not in point:
                    raise UnboundSymbolError(f"symbol {x.name!r} is not bound")
                cache[x] = float(point[x.name])
            else:
                arg = evaluate_float(x.arg, point)
                try:
                    cache[x] = _FLOAT_FUNCS[x.func](arg)
                except (ValueError, OverflowError) as exc:
                    raise EvaluationError(f"{x.func}({arg}) is undefined") from exc
        return cache[x]

    def poly(terms):
        total = 0.0
        for m, c in terms:
            t = float(c)
            for x, k in m:
                t *= atom_value(x) ** k
            total += t
        return total

    den = poly(e.den)
    if den == 0.0:
        raise DivisionByZeroError(f"denominator of {render(e)} vanishes at the point")
    val = poly(e.num) / den
    if not math.isfinite(val):
        raise EvaluationError(f"non-finite value {val}")
    return val


def evaluate_mp(e: Expr, point: Mapping[str, object], dps: int = 50):
    """Value of ``e`` as an mpmath float at ``dps`` digits (transcendental path)."""
    import mpmath

    e = as_expr(e)
    funcs = {"sin": mpmath.sin, "cos": mpmath.cos, "exp": mpmath.exp,
             "ln": mpmath.log, "sqrt": mpmath.sqrt}
    with mpmath.workdps(dps):
        def value(x):
            if isinstance(x, Var):
                if x.name not in point:
                    raise UnboundSymbolError(f"symbol {x.name!r} is not bound")
                q = Fraction(point[x.name])
                return mpmath.mpf(q.numerator) / q.denominator
            arg = evaluate_mp(x.arg, point, dps)
            if (x.func == "ln" and arg <= 0) or (x.func == "sqrt" and arg < 0):
                raise EvaluationError(f"{x.func}({arg}) is undefined")
            return funcs[x.func](arg)

        vals = {x: value(x) for x in e.atoms()}

        def poly(terms):
            total = mpmath.mpf(0)
            for m, c in terms:
                t = mpmath.mpf(c.numerator) / c.denominator
                for x, k in m:
                    t *= vals[x] ** k
                total += t
            return total

        den = poly(e.den)
        if den == 0:
            raise DivisionByZeroError(f"denominator of {render(e)} vanishes at the point")
        return poly(e.num) / den


def _py_poly(terms, names: dict) -> str:
    if not terms:
        return "0.0"
    parts = []
    for m, c in terms:
        f = [repr(float(c))]
        for x, k in m:
            a = _py_atom(x, names)
            f.append(a if k == 1 else f"{a}**{k}")
        parts.append("*".join(f))
    return "(" + " + ".join(parts) + ")"


def _py_atom(x: Atom, names: dict) -> str:
    if isinstance(x, Var):
        if x.name not in names:
            raise UnboundSymbolError(f"symbol {x.name!r} is not an argument")
        return names[x.name]
    fn = {"ln": "log"}.get(x.func, x.func)
    return f"_m.{fn}({_py_source(x.arg, names)})"


def _py_source(e: Expr, names: dict) -> str:
    num = _py_poly(e.num, names)
    if e.is_polynomial():
        return num
    return f"({num}/{_py_poly(e.den, names)})"


def lambdify(exprs, args: Iterable[str]):
    """Compile expressions into a fast float function ``f(*values)``.

    A single expression yields a scalar function; a sequence yields a
    function returning a list.
    """
    args = list(args)
    names = {a: f"_a{i}" for i, a in enumerate(args)}
    single = isinstance(exprs, Expr)
    items = [exprs] if single else [as_expr(x) for x in exprs]
    body = ", ".join(_py_source(x, names) for x in items)
    params = ", ".join(names[a] for a in args)
    src = f"def _f({params}):\n    return [{body}]\n"
    scope = {"_m": math}
    exec(compile(src, "<flatlas-lambdify>", "exec"), scope)
    fn = scope["_f"]
    if single:
        return lambda *v: fn(*v)[0]
    return fn


# --------------------------------------------------------------------------
# zero testing


def sample_rational(rng: random.Random) -> Fraction:
    """Coordinate p/q with p in {-7..7}\\{0}, q in 1..5."""
    p = 0
    while p == 0:
        p = rng.randint(-7, 7)
    return Fraction(p, rng.randint(1, 5))


def is_zero(e: Expr, seed: int = ZERO_TEST_SEED) -> bool:
    """Symbolic zero test.

    Exact for expressions without function atoms.  Otherwise the expression
    is evaluated (double precision) at ``ZERO_TEST_SAMPLES`` deterministic
    pseudo-random rational points; it is declared zero when all values
    vanish to within a relative 1e-9.  A false positive is possible in
    principle; this is accepted.
    """
    e = as_expr(e)
    if e.is_zero_canonical():
        return True
    if not e.has_functions():
        return False
    rng = random.Random(seed)
    names = sorted(e.free_symbols)
    good = 0
    for _ in range(ZERO_TEST_ATTEMPTS):
        pt = {n: sample_rational(rng) for n in names}
        try:
            evaluate_float(e, pt)
            terms = [evaluate_float(Expr._make({m: c}), pt) for m, c in e.num]
        except EvaluationError:
            continue
        val = sum(terms)
        scale = max(1.0, sum(abs(t) for t in terms))
        if abs(val) > 1e-9 * scale:
            return False
        good += 1
        if good >= ZERO_TEST_SAMPLES:
            return True
    raise EvaluationError("zero test: too many failed evaluations")


def canonical(e) -> Expr:
    """Canonical form (identity on Expr; re-canonicalizes rendered text)."""
    return parse_expr(render(as_expr(e)))
