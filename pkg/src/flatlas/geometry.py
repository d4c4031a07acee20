"""Vector fields, Lie brackets, distributions, rank and involutivity."""
from __future__ import annotations

import logging
import random
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from . import linalg
from .symbolic import (
    ZERO,
    EvaluationError,
    Expr,
    SymbolTable,
    TranscendentalError,
    as_expr,
    differentiate,
    evaluate,
    evaluate_mp,
    parse_expr,
    render,
    sample_rational,
    subs,
)

log = logging.getLogger(__name__)

DEFAULT_SEED = 0x5EED
N_SAMPLES = 25
MAX_ATTEMPTS = 200


class GeometryError(Exception):
    pass


class FrameMismatchError(GeometryError):
    pass


class SamplingError(GeometryError):
    """Every sampled point failed to evaluate."""


@dataclass(frozen=True)
class VectorField:
    """Components over an ordered coordinate frame.

    Symbols that are not frame coordinates (inputs held symbolic, truncated
    jet terminals) behave as parameters under differentiation.
    """

    components: tuple
    frame: tuple

    def __post_init__(self):
        comps = tuple(as_expr(c) for c in self.components)
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "frame", tuple(self.frame))
        if len(comps) != len(self.frame):
            raise FrameMismatchError(
                f"{len(comps)} components for a frame of dimension {len(self.frame)}"
            )

    @classmethod
    def parse(cls, texts: Sequence[str], frame: Sequence[str], table=None) -> "VectorField":
        return cls(tuple(parse_expr(t, table) for t in texts), tuple(frame))

    @classmethod
    def coordinate(cls, name: str, frame: Sequence[str]) -> "VectorField":
        """The field d/d(name)."""
        return cls(tuple(int(c == name) for c in frame), tuple(frame))

    @classmethod
    def zero(cls, frame: Sequence[str]) -> "VectorField":
        return cls((ZERO,) * len(frame), tuple(frame))

    @property
    def dim(self) -> int:
        return len(self.frame)

    def __getitem__(self, i):
        return self.components[i]

    def __iter__(self):
        return iter(self.components)

    def _check(self, other: "VectorField"):
        if self.frame != other.frame:
            raise FrameMismatchError(f"frames differ: {self.frame} vs {other.frame}")

    def __add__(self, other: "VectorField") -> "VectorField":
        self._check(other)
        return VectorField(tuple(a + b for a, b in zip(self, other)), self.frame)

    def __sub__(self, other: "VectorField") -> "VectorField":
        self._check(other)
        return VectorField(tuple(a - b for a, b in zip(self, other)), self.frame)

    def __neg__(self) -> "VectorField":
        return VectorField(tuple(-a for a in self), self.frame)

    def scale(self, factor) -> "VectorField":
        factor = as_expr(factor)
        return VectorField(tuple(factor * a for a in self), self.frame)

    def is_zero(self) -> bool:
        return all(c.is_zero_canonical() for c in self.components)

    def lie_derivative(self, h) -> Expr:
        """L_self h = sum_i self_i * dh/dx_i."""
        h = as_expr(h)
        total = ZERO
        syms = h.free_symbols
        for c, x in zip(self.components, self.frame):
            if x in syms and not c.is_zero_canonical():
                total = total + c * differentiate(h, x)
        return total

    def subs(self, mapping: Mapping[str, object]) -> "VectorField":
        return VectorField(tuple(subs(c, mapping) for c in self), self.frame)

    def extend(self, frame: Sequence[str]) -> "VectorField":
        """Same field on a larger frame, zero along the new coordinates."""
        frame = tuple(frame)
        own = dict(zip(self.frame, self.components))
        missing = set(self.frame) - set(frame)
        if missing:
            raise FrameMismatchError(f"target frame lacks {sorted(missing)}")
        return VectorField(tuple(own.get(x, ZERO) for x in frame), frame)

    def restrict(self, frame: Sequence[str]) -> "VectorField":
        own = dict(zip(self.frame, self.components))
        return VectorField(tuple(own[x] for x in frame), tuple(frame))

    def degree(self) -> int:
        return max((c.degree() for c in self.components), default=0)

    @property
    def free_symbols(self) -> frozenset:
        out = set()
        for c in self.components:
            out |= c.free_symbols
        return frozenset(out)

    def at(self, point: Mapping[str, object]) -> list:
        return [evaluate(c, point) for c in self.components]

    def __str__(self):
        return "[" + ", ".join(render(c) for c in self.components) + "]"


def lie_bracket(a: VectorField, b: VectorField) -> VectorField:
    """[a, b] = (db/dx) a - (da/dx) b."""
    a._check(b)
    comps = []
    for i in range(a.dim):
        comps.append(a.lie_derivative(b[i]) - b.lie_derivative(a[i]))
    return VectorField(tuple(comps), a.frame)


def ad_power(eta: VectorField, gamma: VectorField, k: int) -> VectorField:
    if k < 0:
        raise ValueError("k must be non-negative")
    out = gamma
    eta._check(gamma)
    for _ in range(k):
        out = lie_bracket(eta, out)
    return out


# --------------------------------------------------------------------------
# systems


@dataclass(frozen=True)
class ControlAffineSystem:
    """xdot = drift(x) + sum_i u_i * controls[i](x)."""

    states: tuple
    control_names: tuple
    drift: VectorField
    controls: tuple
    name: str = "system"

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "control_names", tuple(self.control_names))
        object.__setattr__(self, "controls", tuple(self.controls))
        n, m = len(self.states), len(self.controls)
        if n < 2:
            raise GeometryError("at least two states are required")
        if not 1 <= m <= n - 1:
            raise GeometryError(f"need 1 <= m <= n-1 controls, got m={m}, n={n}")
        if len(self.control_names) != m:
            raise GeometryError("control names do not match control fields")
        for f in (self.drift,) + self.controls:
            if f.frame != self.states:
                raise FrameMismatchError("all fields must live on the state frame")
        stray = set()
        for f in (self.drift,) + self.controls:
            stray |= f.free_symbols
        stray -= set(self.states)
        if stray:
            raise GeometryError(f"fields depend on non-state symbols {sorted(stray)}")

    @classmethod
    def parse(cls, states, controls, drift, fields, name="system") -> "ControlAffineSystem":
        states = tuple(states)
        table = SymbolTable(states)
        return cls(
            states,
            tuple(controls),
            VectorField.parse(drift, states, table),
            tuple(VectorField.parse(f, states, table) for f in fields),
            name,
        )

    @property
    def n(self) -> int:
        return len(self.states)

    @property
    def m(self) -> int:
        return len(self.controls)

    def control_matrix(self) -> "FieldMatrix":
        return FieldMatrix(self.controls)

    def g(self, u: Sequence | None = None) -> VectorField:
        return system_field_g(self, u)

    def control_independence_warning(self) -> str | None:
        r = generic_rank(self.control_matrix())
        if r < self.m:
            msg = f"control fields are not generically independent (rank {r} < {self.m})"
            warnings.warn(msg)
            return msg
        return None

    def symbol_table(self, jet_order: int = 0) -> SymbolTable:
        return SymbolTable(self.states, self.control_names, jet_order)


def system_field_g(sys: ControlAffineSystem, u: Sequence | None = None) -> VectorField:
    """g = f0 + sum u_i f_i; ``u`` defaults to the symbolic control names."""
    if u is None:
        u = [Expr.symbol(c) for c in sys.control_names]
    if len(u) != sys.m:
        raise GeometryError(f"expected {sys.m} inputs, got {len(u)}")
    out = sys.drift
    for ui, fi in zip(u, sys.controls):
        ui = as_expr(ui)
        if not ui.is_zero_canonical():
            out = out + fi.scale(ui)
    return out


# --------------------------------------------------------------------------
# matrices of fields and ranks


@dataclass(frozen=True)
class FieldMatrix:
    columns: tuple

    def __post_init__(self):
        cols = tuple(self.columns)
        object.__setattr__(self, "columns", cols)
        frames = {c.frame for c in cols}
        if len(frames) > 1:
            raise FrameMismatchError("columns over different frames")

    @property
    def frame(self) -> tuple:
        return self.columns[0].frame if self.columns else ()

    @property
    def shape(self) -> tuple:
        return (len(self.frame), len(self.columns))

    @property
    def free_symbols(self) -> frozenset:
        out = set()
        for c in self.columns:
            out |= c.free_symbols
        return frozenset(out)

    def rows(self) -> list:
        return [[col[i] for col in self.columns] for i in range(len(self.frame))]

    def __add__(self, other: "FieldMatrix") -> "FieldMatrix":
        return FieldMatrix(self.columns + other.columns)


def _numeric_rows(mat: FieldMatrix, point: Mapping[str, object]):
    rows = mat.rows()
    try:
        return [[evaluate(e, point) for e in row] for row in rows], True
    except TranscendentalError:
        return [[evaluate_mp(e, point) for e in row] for row in rows], False


def rank_at_point(mat: FieldMatrix | Sequence[VectorField], point: Mapping[str, object]) -> int:
    """Exact rank at ``point`` (fraction-free elimination over Q).

    Entries with function atoms are evaluated at 50 digits instead and the
    rank is taken with a relative threshold.
    """
    if not isinstance(mat, FieldMatrix):
        mat = FieldMatrix(tuple(mat))
    if not mat.columns:
        return 0
    values, exact = _numeric_rows(mat, point)
    return linalg.bareiss_rank(values) if exact else linalg.float_rank(values)


def sample_points(names: Iterable[str], seed: int = DEFAULT_SEED,
                  fixed: Mapping[str, object] | None = None):
    """Endless stream of deterministic pseudo-random rational points."""
    names = sorted(set(names) - set(fixed or {}))
    rng = random.Random(seed)
    while True:
        pt = {n: sample_rational(rng) for n in names}
        if fixed:
            pt.update(fixed)
        yield pt


def generic_rank(mat: FieldMatrix | Sequence[VectorField], *, seed: int = DEFAULT_SEED,
                 n_samples: int = N_SAMPLES, fixed: Mapping[str, object] | None = None) -> int:
    """Max of rank_at_point over sampled points.

    ``fixed`` pins some symbols (e.g. the state) and samples only the rest,
    which gives the rank for generic values of the remaining symbols.
    """
    if not isinstance(mat, FieldMatrix):
        mat = FieldMatrix(tuple(mat))
    if not mat.columns:
        return 0
    cap = min(mat.shape)
    best = 0
    good = 0
    stream = sample_points(mat.free_symbols, seed, fixed)
    for _ in range(MAX_ATTEMPTS):
        pt = next(stream)
        try:
            r = rank_at_point(mat, pt)
        except EvaluationError:
            continue
        good += 1
        best = max(best, r)
        if best == cap or good >= n_samples:
            return best
    if good == 0:
        raise SamplingError("all sampled points failed to evaluate")
    return best


def wronskian_matrix(sys: ControlAffineSystem, u: Sequence | None, k: int) -> FieldMatrix:
    """(G, -ad_g G, ..., (-1)^k ad_g^k G)."""
    if k < 0:
        raise ValueError("k must be non-negative")
    g = system_field_g(sys, u)
    cols = []
    block = list(sys.controls)
    for j in range(k + 1):
        if j:
            block = [lie_bracket(g, c) for c in block]
        cols.extend(c if j % 2 == 0 else -c for c in block)
    return FieldMatrix(tuple(cols))


# --------------------------------------------------------------------------
# distributions


@dataclass(frozen=True)
class Distribution:
    generators: tuple

    def __post_init__(self):
        gens = tuple(self.generators)
        object.__setattr__(self, "generators", gens)
        if not gens:
            raise GeometryError("a distribution needs at least one generator")
        if len({g.frame for g in gens}) != 1:
            raise FrameMismatchError("generators over different frames")

    @property
    def frame(self) -> tuple:
        return self.generators[0].frame

    def matrix(self) -> FieldMatrix:
        return FieldMatrix(self.generators)

    def rank_at(self, point) -> int:
        return rank_at_point(self.matrix(), point)

    def generic_rank(self, **kw) -> int:
        return generic_rank(self.matrix(), **kw)

    def __len__(self):
        return len(self.generators)


@dataclass
class InvolutivityResult:
    involutive: bool | None   # None = indeterminate (rank not constant at the point)
    witness: VectorField | None = None
    pair: tuple | None = None
    basis: tuple = ()
    rank: int = 0
    note: str = ""

    def __bool__(self):
        return bool(self.involutive)


def _ranker(point, seed, fixed=None):
    if point is None:
        return lambda cols: generic_rank(cols, seed=seed, fixed=fixed)
    return lambda cols: rank_at_point(cols, point)


def select_basis(gens: Sequence[VectorField], rank_fn) -> tuple[list[int], int]:
    """Column pivoting with smallest-degree-first tie-breaking."""
    order = sorted(range(len(gens)), key=lambda i: (gens[i].degree(), i))
    chosen: list[int] = []
    r = 0
    for i in order:
        if gens[i].is_zero():
            continue
        r_new = rank_fn([gens[j] for j in chosen] + [gens[i]])
        if r_new > r:
            chosen.append(i)
            r = r_new
    return sorted(chosen), r


def is_involutive(d: Distribution, point: Mapping[str, object] | None = None, *,
                  seed: int = DEFAULT_SEED) -> InvolutivityResult:
    """Closure of ``d`` under brackets, at a point or generically.

    With a point, the rank there must equal the generic rank of the
    generators, otherwise the verdict is indeterminate (``None``).
    """
    gens = d.generators
    r_gen = generic_rank(d.matrix(), seed=seed)
    if point is not None:
        r_pt = rank_at_point(d.matrix(), point)
        if r_pt != r_gen:
            return InvolutivityResult(None, rank=r_pt,
                                      note=f"rank {r_pt} at point differs from generic rank {r_gen}")
    rank_fn = _ranker(point, seed)
    basis_idx, r = select_basis(gens, rank_fn)
    if r == 0:
        return InvolutivityResult(True, basis=(), rank=0, note="rank 0, vacuously involutive")
    basis = [gens[i] for i in basis_idx]
    for a in range(len(basis)):
        for b in range(a + 1, len(basis)):
            br = lie_bracket(basis[a], basis[b])
            if br.is_zero():
                continue
            if rank_fn(basis + [br]) > r:
                return InvolutivityResult(False, witness=br,
                                          pair=(basis_idx[a], basis_idx[b]),
                                          basis=tuple(basis_idx), rank=r)
    return InvolutivityResult(True, basis=tuple(basis_idx), rank=r)


@dataclass
class ClosureResult:
    distribution: Distribution
    steps: int
    stabilized: bool
    generic_rank: int
    added: list = field(default_factory=list)


class ClosureBudgetError(GeometryError):
    pass


def involutive_closure(d: Distribution, max_steps: int = 8, *,
                       point: Mapping[str, object] | None = None,
                       seed: int = DEFAULT_SEED, strict: bool = False) -> ClosureResult:
    """Adjoin pairwise brackets until the rank stops growing.

    A bracket is kept when it raises the generic rank, or the rank at
    ``point`` when one is given.  Runs out of budget -> ``stabilized=False``
    (or :class:`ClosureBudgetError` with ``strict``).
    """
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    gens = [g for g in d.generators]
    dim = len(d.frame)
    r_gen = generic_rank(gens, seed=seed)
    r_pt = rank_at_point(gens, point) if point is not None else None
    frontier = set(range(len(gens)))
    added = []
    for step in range(1, max_steps + 1):
        new = []
        if r_gen == dim and (r_pt is None or r_pt == dim):
            return ClosureResult(Distribution(tuple(gens)), step - 1, True, r_gen, added)
        for i in range(len(gens)):
            for j in range(i + 1, len(gens)):
                if i not in frontier and j not in frontier:
                    continue
                br = lie_bracket(gens[i], gens[j])
                if br.is_zero():
                    continue
                trial = gens + new + [br]
                g2 = generic_rank(trial, seed=seed)
                p2 = rank_at_point(trial, point) if point is not None else None
                if g2 > r_gen or (p2 is not None and p2 > r_pt):
                    new.append(br)
                    added.append(((i, j), br))
                    r_gen, r_pt = g2, p2
        if not new:
            return ClosureResult(Distribution(tuple(gens)), step - 1, True, r_gen, added)
        frontier = set(range(len(gens), len(gens) + len(new)))
        gens.extend(new)
    if strict:
        raise ClosureBudgetError(f"closure not stabilized after {max_steps} steps")
    return ClosureResult(Distribution(tuple(gens)), max_steps, False, r_gen, added)


# --------------------------------------------------------------------------
# scalar Jacobians


def jacobian(exprs: Sequence, names: Sequence[str]) -> list[list[Expr]]:
    return [[differentiate(as_expr(e), v) for v in names] for e in exprs]


def expr_rank_at(rows: Sequence[Sequence[Expr]], point: Mapping[str, object]) -> int:
    """Rank at ``point`` of a matrix of scalar expressions."""
    if not rows or not rows[0]:
        return 0
    try:
        values = [[evaluate(e, point) for e in row] for row in rows]
        return linalg.bareiss_rank(values)
    except TranscendentalError:
        values = [[evaluate_mp(e, point) for e in row] for row in rows]
        return linalg.float_rank(values)


def expr_generic_rank(rows: Sequence[Sequence[Expr]], *, seed: int = DEFAULT_SEED,
                      fixed: Mapping[str, object] | None = None) -> int:
    names = set()
    for row in rows:
        for e in row:
            names |= e.free_symbols
    cap = min(len(rows), len(rows[0])) if rows else 0
    best, good = 0, 0
    stream = sample_points(names, seed, fixed)
    for _ in range(MAX_ATTEMPTS):
        try:
            r = expr_rank_at(rows, next(stream))
        except EvaluationError:
            continue
        good += 1
        best = max(best, r)
        if best == cap or good >= N_SAMPLES:
            return best
    if good == 0:
        raise SamplingError("all sampled points failed to evaluate")
    return best
