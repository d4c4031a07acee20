"""Flat outputs at generic points built from first integrals of one control field."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from math import gcd
from typing import Mapping, Sequence

import numpy as np

from . import linalg
from .accessibility import check_generic_condition
from .geometry import (
    DEFAULT_SEED,
    ControlAffineSystem,
    Distribution,
    VectorField,
    expr_generic_rank,
    expr_rank_at,
    is_involutive,
    jacobian,
    lie_bracket,
    rank_at_point,
    system_field_g,
)
from .numeric import (
    DEFAULT_DT,
    FlowBoxIntegrals,
    NumericError,
    SampledSignal,
    integrate,
    newton,
    signal_jets,
)
from .symbolic import (
    ONE,
    ZERO,
    Expr,
    SymbolTable,
    as_expr,
    differentiate,
    evaluate,
    evaluate_float,
    evaluate_mp,
    is_zero,
    jet_name,
    lambdify,
    parse_expr,
    subs,
)


class FlatGenericError(Exception):
    pass


class ConsistencyError(FlatGenericError):
    """An internal identity failed (e.g. psi1 still depends on u_k)."""


def _require_square(sys: ControlAffineSystem):
    if sys.m != sys.n - 1:
        raise FlatGenericError(
            f"the first-integral construction needs m = n-1 controls (m={sys.m}, n={sys.n})")


def _check_k(sys, k):
    if not 1 <= k <= sys.m:
        raise FlatGenericError(f"control index k={k} out of range 1..{sys.m}")


def parse_psi(sys: ControlAffineSystem, psi) -> list[Expr]:
    table = SymbolTable(sys.states)
    return [parse_expr(p, table) if isinstance(p, str) else as_expr(p) for p in psi]


def other_controls(sys: ControlAffineSystem, k: int) -> list[str]:
    return [u for i, u in enumerate(sys.control_names, 1) if i != k]


def flat_symbol(i: int, order: int) -> str:
    return jet_name(f"z{i}", order)


@dataclass
class FirstIntegralCheck:
    integral: list            # per component: True / False
    jacobian_rank: int | None
    expected_rank: int

    @property
    def independent(self) -> bool:
        return self.jacobian_rank is None or self.jacobian_rank == self.expected_rank

    @property
    def passed(self) -> bool:
        return all(self.integral) and self.independent


def verify_first_integrals(sys: ControlAffineSystem, k: int, psi, point: Mapping | None = None,
                           *, seed: int = DEFAULT_SEED) -> FirstIntegralCheck:
    """L_{f_k} psi_i = 0 for each component, and rank D psi = n-1 at ``point``.

    Without a point the rank is the generic one.
    """
    _check_k(sys, k)
    psi = parse_psi(sys, psi)
    if len(psi) != sys.n - 1:
        raise FlatGenericError(f"need {sys.n - 1} components, got {len(psi)}")
    for p in psi:
        if p.free_symbols - set(sys.states):
            raise FlatGenericError(f"candidate {p} depends on non-state symbols")
    fk = sys.controls[k - 1]
    verdicts = [is_zero(fk.lie_derivative(p)) for p in psi]
    jac = jacobian(psi, sys.states)
    r = expr_rank_at(jac, point) if point is not None else expr_generic_rank(jac, seed=seed)
    return FirstIntegralCheck(verdicts, r, sys.n - 1)


def build_psi1(sys: ControlAffineSystem, k: int, psi) -> list[Expr]:
    """psi1 = L_g psi0 with g at symbolic u; must not involve u_k."""
    _check_k(sys, k)
    psi = parse_psi(sys, psi)
    g = system_field_g(sys)
    uk = sys.control_names[k - 1]
    out = []
    for p in psi:
        q = g.lie_derivative(p)
        if uk in q.free_symbols and not is_zero(differentiate(q, uk)):
            raise ConsistencyError(f"L_g({p}) depends on {uk}; the first-integral check was unsound")
        if uk in q.free_symbols:
            q = subs(q, {uk: 0})
        out.append(q)
    return out


def build_psi2(sys: ControlAffineSystem, k: int, psi1: Sequence[Expr]) -> list[Expr]:
    """psi2 = L_g psi1 + sum_{j != k} udot_j d psi1 / d u_j."""
    g = system_field_g(sys)
    out = []
    for q in psi1:
        r = g.lie_derivative(q)
        for u in other_controls(sys, k):
            r = r + Expr.symbol(jet_name(u, 1)) * differentiate(q, u)
        out.append(r)
    return out


def unknown_names(sys: ControlAffineSystem, k: int) -> tuple[list[str], list[str]]:
    """(x, u_hat) for M and (x, u_hat, u_k, udot_hat) for N."""
    uh = other_controls(sys, k)
    m_vars = list(sys.states) + uh
    n_vars = m_vars + [sys.control_names[k - 1]] + [jet_name(u, 1) for u in uh]
    return m_vars, n_vars


@dataclass
class MNReport:
    m_rank: int
    n_rank: int
    size_m: int
    size_n: int
    lie_term: list            # values of -L_{[g,f_k]} psi0 at the point
    lie_term_identity: bool   # d psi2 / d u_k == -L_{[g,f_k]} psi0 symbolically
    block_consistent: bool    # N invertible implies M full rank

    @property
    def m_full(self) -> bool:
        return self.m_rank == self.size_m

    @property
    def n_invertible(self) -> bool:
        return self.n_rank == self.size_n

    @property
    def lie_term_nonzero(self) -> bool:
        return any(v != 0 for v in self.lie_term)


def _complete_point(sys, k, point):
    pt = dict(point)
    for u in sys.control_names:
        pt.setdefault(u, Fraction(0))
    for u in other_controls(sys, k):
        pt.setdefault(jet_name(u, 1), Fraction(0))
    return pt


def check_M_N_invertibility(sys: ControlAffineSystem, k: int, psi, point: Mapping) -> MNReport:
    _require_square(sys)
    psi = parse_psi(sys, psi)
    psi1 = build_psi1(sys, k, psi)
    psi2 = build_psi2(sys, k, psi1)
    pt = _complete_point(sys, k, point)
    m_vars, n_vars = unknown_names(sys, k)
    M = jacobian(psi + psi1, m_vars)
    N = jacobian(psi + psi1 + psi2, n_vars)
    m_rank = expr_rank_at(M, pt)
    n_rank = expr_rank_at(N, pt)
    g = system_field_g(sys)
    br = lie_bracket(g, sys.controls[k - 1])
    lie = [-br.lie_derivative(p) for p in psi]
    uk = sys.control_names[k - 1]
    ident = all(is_zero(differentiate(q, uk) - l) for q, l in zip(psi2, lie))
    lie_vals = [evaluate(e, pt) if not e.has_functions() else evaluate_mp(e, pt) for e in lie]
    size_m, size_n = len(m_vars), len(n_vars)
    consistent = not (n_rank == size_n and m_rank < size_m)
    return MNReport(m_rank, n_rank, size_m, size_n, lie_vals, ident, consistent)


# --------------------------------------------------------------------------
# input recovery


def _affine_in(e: Expr, v: str):
    """(a, b) with e = a*v + b and a, b free of v, or None."""
    a = differentiate(e, v)
    if a.is_zero_canonical() or v in a.free_symbols:
        return None
    b = subs(e, {v: 0})
    if v in b.free_symbols:
        return None
    return a, b


@dataclass
class SymbolicRecovery:
    solved: dict               # unknown name -> Expr in flat-output jets
    unsolved: list

    @property
    def complete(self) -> bool:
        return not self.unsolved


def recover_inputs_symbolic(sys: ControlAffineSystem, k: int, psi) -> SymbolicRecovery:
    """Solve psi0 = z, psi1 = zdot, psi2 = zddot for (x, u_hat, u_k, udot_hat).

    Only triangular structure is exploited: an equation is used once it is
    affine in its single remaining unknown.  Whatever cannot be reached this
    way is left in ``unsolved`` (the numeric route handles it).
    """
    _require_square(sys)
    psi = parse_psi(sys, psi)
    psi1 = build_psi1(sys, k, psi)
    psi2 = build_psi2(sys, k, psi1)
    _, unknowns = unknown_names(sys, k)
    eqs = []
    for order, block in enumerate((psi, psi1, psi2)):
        for i, e in enumerate(block, 1):
            eqs.append(e - Expr.symbol(flat_symbol(i, order)))
    solved: dict = {}
    pending = set(unknowns)
    progress = True
    while pending and progress:
        progress = False
        for idx, e in enumerate(eqs):
            if e is None:
                continue
            left = e.free_symbols & pending
            if not left:
                eqs[idx] = None
                continue
            if len(left) != 1:
                continue
            (v,) = left
            ab = _affine_in(e, v)
            if ab is None:
                continue
            a, b = ab
            sol = -b / a
            solved[v] = sol
            pending.discard(v)
            eqs[idx] = None
            eqs = [None if q is None else subs(q, {v: sol}) for q in eqs]
            progress = True
            break
    order = {u: i for i, u in enumerate(unknowns)}
    return SymbolicRecovery(dict(sorted(solved.items(), key=lambda kv: order[kv[0]])),
                            sorted(pending, key=order.get))


@dataclass
class NumericRecovery:
    times: np.ndarray
    states: np.ndarray        # (N, n)
    inputs: np.ndarray        # (N, m)
    residuals: np.ndarray     # per-sample residual inf-norm

    @property
    def max_residual(self) -> float:
        return float(self.residuals.max()) if len(self.residuals) else 0.0


def _guess_vector(sys, k, guess, n_vars):
    if guess is None:
        raise FlatGenericError("an initial guess for (x, u) is required")
    if isinstance(guess, Mapping):
        return np.array([float(guess.get(v, 0.0)) for v in n_vars])
    g = np.asarray(guess, dtype=float)
    if len(g) == len(n_vars):
        return g
    if len(g) == sys.n + sys.m:
        x, u = g[:sys.n], g[sys.n:]
        d = dict(zip(sys.states, x))
        d.update(zip(sys.control_names, u))
        return np.array([d.get(v, 0.0) for v in n_vars])
    raise FlatGenericError("initial guess has the wrong length")


def recover_inputs_numeric(sys: ControlAffineSystem, k: int, psi, signal, times,
                           guess=None) -> NumericRecovery:
    """Per-sample damped Newton on (psi0, psi1, psi2) = (z, zdot, zddot).

    ``signal`` is anything :func:`numeric.signal_jets` accepts.  Each solve
    starts from the previous sample's solution.
    """
    _require_square(sys)
    psi = parse_psi(sys, psi)
    psi1 = build_psi1(sys, k, psi)
    psi2 = build_psi2(sys, k, psi1)
    _, n_vars = unknown_names(sys, k)
    eqs = psi + psi1 + psi2
    F = lambdify(eqs, n_vars)
    J = lambdify([c for row in jacobian(eqs, n_vars) for c in row], n_vars)
    size = len(n_vars)
    times = np.asarray(times, dtype=float)
    jets = signal_jets(signal, times, 2)
    target = np.concatenate(jets, axis=1)
    if target.shape[1] != size:
        raise FlatGenericError("signal dimension does not match the flat output")
    w = _guess_vector(sys, k, guess, n_vars)
    sols = np.empty((len(times), size))
    res = np.empty(len(times))
    for i, tgt in enumerate(target):
        fun = lambda v, tgt=tgt: np.array(F(*v)) - tgt
        jac = lambda v: np.array(J(*v)).reshape(size, size)
        try:
            w, res[i] = newton(fun, jac, w)
        except NumericError as exc:
            raise NumericError(f"recovery failed at t={times[i]:.6g}: {exc}") from exc
        sols[i] = w
    idx = {v: j for j, v in enumerate(n_vars)}
    states = sols[:, [idx[x] for x in sys.states]]
    inputs = sols[:, [idx[u] for u in sys.control_names]]
    return NumericRecovery(times, states, inputs, res)


@dataclass
class RoundTrip:
    recovery: NumericRecovery
    states: np.ndarray
    z_error: float


def round_trip(sys: ControlAffineSystem, k: int, psi, signal, t_span, *, guess,
               dt: float = DEFAULT_DT) -> RoundTrip:
    """Recover (x, u) on a half-step grid, simulate under u, compare psi0(x) with z."""
    psi = parse_psi(sys, psi)
    t0, t1 = t_span
    steps = int(round((t1 - t0) / dt))
    fine = t0 + (dt / 2) * np.arange(2 * steps + 1)
    rec = recover_inputs_numeric(sys, k, psi, signal, fine, guess)
    usig = SampledSignal(t0, dt / 2, rec.inputs)
    traj = integrate(sys, rec.states[0], usig, (t0, t1), dt)
    fz = lambdify(psi, list(sys.states))
    z_sim = np.array([fz(*x) for x in traj.states])
    z_ref = signal_jets(signal, traj.times, 0)[0]
    return RoundTrip(rec, traj.states, float(np.max(np.abs(z_sim - z_ref))))


# --------------------------------------------------------------------------
# extended system check


@dataclass
class LinearizationCheck:
    g0_involutive: bool | None
    g1_involutive: bool | None
    g1_rank: int
    target_rank: int

    @property
    def passed(self) -> bool:
        return bool(self.g0_involutive) and bool(self.g1_involutive) and self.g1_rank == self.target_rank


def feedback_linearization_check(sys: ControlAffineSystem, k: int, point: Mapping,
                                 *, seed: int = DEFAULT_SEED) -> LinearizationCheck:
    """Extended state (x, u_hat) with udot_hat as new inputs alongside u_k.

    Drift f0 + sum_{i != k} u_i f_i, control fields d/du_i (i != k) and f_k;
    G1 = G0 + ad_f G0 must be involutive of rank 2n-2 at ``point``.
    """
    _require_square(sys)
    _check_k(sys, k)
    uh = other_controls(sys, k)
    frame = tuple(sys.states) + tuple(uh)
    drift = sys.drift
    for i, (u, f) in enumerate(zip(sys.control_names, sys.controls), 1):
        if i != k:
            drift = drift + f.scale(Expr.symbol(u))
    drift = VectorField(tuple(drift.components) + (ZERO,) * len(uh), frame)
    g0 = [VectorField.coordinate(u, frame) for u in uh] + [sys.controls[k - 1].extend(frame)]
    g1 = g0 + [lie_bracket(drift, v) for v in g0]
    pt = {v: Fraction(point.get(v, 0)) for v in frame}
    r1 = rank_at_point(g1, pt)
    inv0 = is_involutive(Distribution(tuple(g0)), pt, seed=seed).involutive
    inv1 = is_involutive(Distribution(tuple(g1)), pt, seed=seed).involutive
    return LinearizationCheck(inv0, inv1, r1, 2 * sys.n - 2)


# --------------------------------------------------------------------------
# first-integral search


def _monomials(names: Sequence[str], degree: int) -> list[Expr]:
    out = []

    def rec(start, remaining, current):
        if current is not None:
            out.append(current)
        if remaining == 0:
            return
        for i in range(start, len(names)):
            x = Expr.symbol(names[i])
            rec(i, remaining - 1, x if current is None else current * x)

    rec(0, degree, None)
    return out


def _normalize(p: Expr) -> Expr:
    """Integer coefficients with gcd 1 and a positive first term."""
    coeffs = [c for _, c in p.num]
    den = 1
    for c in coeffs:
        den = den * c.denominator // gcd(den, c.denominator)
    nums = [int(c * den) for c in coeffs]
    g = 0
    for v in nums:
        g = gcd(g, v)
    scale = Fraction(den, g)
    if nums[0] < 0:
        scale = -scale
    return p * scale


def _poly_terms(e: Expr) -> dict:
    if not e.is_polynomial():
        raise FlatGenericError("non-polynomial Lie derivative in the ansatz")
    return dict(e.num)


def polynomial_integrals(field_: VectorField, names: Sequence[str], degree_bound: int) -> list[Expr]:
    """Basis of the polynomial first integrals of ``field_`` up to ``degree_bound``.

    Higher-degree monomials are placed in earlier columns so that each
    basis vector is anchored on the lowest-degree monomial it can use.
    """
    mons = _monomials(list(names), degree_bound)
    mons.sort(key=lambda m: (-m.degree(), m.sort_key()))
    derivs = [_poly_terms(field_.lie_derivative(m)) for m in mons]
    rows_index: dict = {}
    for d in derivs:
        for mono in d:
            rows_index.setdefault(mono, len(rows_index))
    rows = [[Fraction(0)] * len(mons) for _ in rows_index]
    for j, d in enumerate(derivs):
        for mono, c in d.items():
            rows[rows_index[mono]][j] = c
    basis = linalg.nullspace(rows, len(mons))
    out = []
    for vec in basis:
        p = ZERO
        for c, m in zip(vec, mons):
            if c:
                p = p + m * c
        if not p.is_constant():
            out.append(_normalize(p))
    return out


def _polynomial_scaling(f: VectorField) -> VectorField | None:
    """f times the product of its component denominators, when that is polynomial."""
    if any(c.has_functions() for c in f.components):
        return None
    scale = ONE
    for c in f.components:
        if not c.is_polynomial():
            scale = scale * Expr._make(dict(c.den))
    out = f.scale(scale)
    return out if all(c.is_polynomial() for c in out.components) else None


@dataclass
class IntegralSearch:
    symbolic: list
    numeric: FlowBoxIntegrals | None = None
    wanted: int = 0
    notes: list = field(default_factory=list)

    @property
    def complete(self) -> bool:
        return len(self.symbolic) == self.wanted


def search_first_integrals(sys: ControlAffineSystem, k: int, point: Mapping | None = None,
                           degree_bound: int = 3, *, seed: int = DEFAULT_SEED) -> IntegralSearch:
    """Polynomial-ansatz first integrals of f_k, up to n-1 independent ones.

    Falls back to numeric flow-box integrals (marked non-symbolic) when the
    ansatz does not produce enough of them and a point is known.
    """
    _check_k(sys, k)
    if degree_bound < 1:
        raise ValueError("degree_bound must be >= 1")
    fk = sys.controls[k - 1]
    if point is not None:
        pt = {x: point[x] for x in sys.states}
        if all(evaluate_float(c, pt) == 0 for c in fk.components):
            raise FlatGenericError(f"f{k} vanishes at the point")
    wanted = sys.n - 1
    result = IntegralSearch([], wanted=wanted)
    scaled = _polynomial_scaling(fk)
    cands = []
    if scaled is None:
        result.notes.append("control field is not rational; ansatz skipped")
    else:
        cands = polynomial_integrals(scaled, sys.states, degree_bound)
    cands.sort(key=lambda p: (p.degree(), len(p.num), p.sort_key()))
    chosen: list = []
    rank = 0
    for c in cands:
        jac = jacobian(chosen + [c], sys.states)
        r = expr_rank_at(jac, point) if point is not None else expr_generic_rank(jac, seed=seed)
        if r > rank:
            chosen.append(c)
            rank = r
        if rank == wanted:
            break
    result.symbolic = chosen
    if rank < wanted:
        result.notes.append(f"only {rank} polynomial integrals up to degree {degree_bound}")
        if point is not None:
            base = [float(point[x]) for x in sys.states]
            result.numeric = FlowBoxIntegrals(fk, base)
            result.notes.append("numeric flow-box integrals attached (non-symbolic)")
    return result


# --------------------------------------------------------------------------
# one-call pipeline


@dataclass
class VerificationReport:
    k: int
    psi: list
    first_integrals: FirstIntegralCheck
    psi1: list
    mn: MNReport | None
    recovered: SymbolicRecovery | None
    linearization: LinearizationCheck | None
    round_trip_error: float | None = None
    notes: list = field(default_factory=list)

    @property
    def verified(self) -> bool:
        return (self.first_integrals.passed and self.mn is not None
                and self.mn.m_full and self.mn.n_invertible
                and self.mn.lie_term_identity and self.mn.block_consistent)

    @property
    def verdict(self) -> str:
        if self.verified:
            return "flat-output-verified"
        if not all(self.first_integrals.integral):
            return "not-first-integrals"
        if not self.first_integrals.independent:
            return "dependent-components"
        return "jacobian-singular"


def analyze_generic(sys: ControlAffineSystem, point: Mapping, k: int | None = None, psi=None,
                    *, degree_bound: int = 3, seed: int = DEFAULT_SEED) -> VerificationReport:
    _require_square(sys)
    notes = []
    if k is None:
        gc = check_generic_condition(sys, point)
        if not gc.holds:
            raise FlatGenericError("the generic condition fails at this point for every k")
        k = gc.holds_with_k
    if psi is None:
        search = search_first_integrals(sys, k, point, degree_bound, seed=seed)
        notes.extend(search.notes)
        if not search.complete:
            raise FlatGenericError(
                f"no complete set of polynomial first integrals of f{k} up to degree {degree_bound}")
        psi = search.symbolic
    psi = parse_psi(sys, psi)
    fic = verify_first_integrals(sys, k, psi, point, seed=seed)
    if not all(fic.integral):
        return VerificationReport(k, psi, fic, [], None, None, None, notes=notes)
    psi1 = build_psi1(sys, k, psi)
    mn = check_M_N_invertibility(sys, k, psi, point)
    rec = recover_inputs_symbolic(sys, k, psi)
    lin = feedback_linearization_check(sys, k, point, seed=seed)
    return VerificationReport(k, psi, fic, psi1, mn, rec, lin, notes=notes)
