"""Flat outputs at points where the control fields lose rank.

The controls are split into ``a`` (independent at the point) and ``b``.
The b-inputs join the flat output; their derivatives live on a truncated
jet frame driven by the extended drift F = f0 + u_b f_b + (jet shift).
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from . import linalg
from .geometry import (
    DEFAULT_SEED,
    ControlAffineSystem,
    VectorField,
    expr_rank_at,
    jacobian,
    lie_bracket,
    rank_at_point,
)
from .flat_generic import _normalize, _monomials
from .numeric import DEFAULT_DT, NumericError, SampledSignal, integrate, newton, signal_jets
from .symbolic import (
    ZERO,
    EvaluationError,
    Expr,
    SymbolTable,
    as_expr,
    is_zero,
    jet_name,
    lambdify,
    parse_expr,
    sample_rational,
)


class DegenerateError(Exception):
    pass


class SplitError(DegenerateError):
    pass


class InvolutivityError(DegenerateError):
    def __init__(self, level: int, witness: VectorField, pair: tuple):
        self.level, self.witness, self.pair = level, witness, pair
        super().__init__(f"Gamma^a_{level} is not involutive; witness {witness}")


class DimensionError(DegenerateError):
    pass


class AnsatzError(DegenerateError):
    pass


# --------------------------------------------------------------------------
# split and extended frame


@dataclass(frozen=True)
class DegenerateSplit:
    a: tuple          # 1-based control indices
    b: tuple
    p: int
    spans: bool = True

    def __str__(self):
        return f"a={list(self.a)}, b={list(self.b)}, p={self.p}"


def _state_point(sys, point) -> dict:
    return {x: Fraction(point[x]) for x in sys.states}


def choose_split(sys: ControlAffineSystem, point: Mapping, a: Sequence[int] | None = None,
                 b: Sequence[int] | None = None) -> DegenerateSplit:
    """Greedy column pivoting over f_1..f_m at the point; the pivots form ``a``.

    An explicit ``a`` (and optionally ``b``) overrides the choice.  The
    a-fields must still be independent; when they do not span G(x0) the
    split is kept but flagged (``spans=False``).
    """
    x0 = _state_point(sys, point)
    total = rank_at_point(sys.controls, x0)
    override = a is not None
    if a is None:
        if total == sys.m:
            raise SplitError("controls have full rank at the point; use the generic route")
        if total == 0:
            raise SplitError("all control fields vanish at the point")
        chosen: list[int] = []
        for i in range(1, sys.m + 1):
            if rank_at_point([sys.controls[j - 1] for j in chosen + [i]], x0) > len(chosen):
                chosen.append(i)
        a = chosen
    a = tuple(sorted(a))
    b = tuple(sorted(b)) if b is not None else tuple(i for i in range(1, sys.m + 1) if i not in a)
    if sorted(a + b) != list(range(1, sys.m + 1)):
        raise SplitError("a and b must partition the control indices")
    if not a:
        raise SplitError("the a-part of the split is empty")
    fa = [sys.controls[i - 1] for i in a]
    if rank_at_point(fa, x0) != len(a):
        raise SplitError("the a-fields are dependent at the point")
    spans = len(a) == total
    if not spans and not override:
        raise SplitError("the a-fields do not span the control distribution at the point")
    p = sys.n - len(a)
    if p < 2 and b:
        raise SplitError("p must exceed 1")
    return DegenerateSplit(a, b, p, spans)


@dataclass(frozen=True)
class ExtendedFrame:
    states: tuple
    b_controls: tuple      # control names of the b-part
    K: int

    @property
    def jets(self) -> tuple:
        return tuple(jet_name(u, j) for u in self.b_controls for j in range(self.K + 1))

    @property
    def names(self) -> tuple:
        return self.states + self.jets

    @property
    def inert(self) -> tuple:
        return tuple(jet_name(u, self.K + 1) for u in self.b_controls)


def default_order(split: DegenerateSplit) -> int:
    return max(2 * split.p - 2, 1)


def build_extended_drift(sys: ControlAffineSystem, split: DegenerateSplit,
                         K: int | None = None) -> tuple[VectorField, ExtendedFrame]:
    """F = f0 + sum_b u_b f_b + sum_j u_b^(j+1) d/du_b^(j), truncated at order K.

    The coefficient of d/du_b^(K) is the inert symbol u_b^(K+1), which is
    not a frame coordinate and so behaves as a constant under brackets.
    """
    K = default_order(split) if K is None else K
    if K < 2 * split.p - 2:
        raise DegenerateError(f"jet order K={K} below 2p-2={2 * split.p - 2}")
    bnames = tuple(sys.control_names[i - 1] for i in split.b)
    frame = ExtendedFrame(tuple(sys.states), bnames, K)
    state_part = sys.drift
    for i in split.b:
        state_part = state_part + sys.controls[i - 1].scale(Expr.symbol(sys.control_names[i - 1]))
    comps = list(state_part.components)
    for u in bnames:
        comps.extend(Expr.symbol(jet_name(u, j + 1)) for j in range(K + 1))
    return VectorField(tuple(comps), frame.names), frame


# --------------------------------------------------------------------------
# the Gamma^a tower


def brunovsky_indices(rank_jumps: Sequence[int]) -> list[int]:
    """k_i = #{j : r_j >= i}; the jumps must be non-increasing."""
    r = list(rank_jumps)
    for x, y in zip(r, r[1:]):
        if y > x:
            raise DegenerateError(f"rank jumps {r} are not non-increasing")
    if any(v < 0 for v in r):
        raise DegenerateError("negative rank jump")
    top = r[0] if r else 0
    return [sum(1 for v in r if v >= i) for i in range(1, top + 1)]


def _box_points(x0: Mapping, radius: Fraction, count: int, seed: int) -> list[dict]:
    rng = random.Random(seed)
    out = []
    for _ in range(count):
        out.append({k: Fraction(v) + radius * Fraction(rng.randint(-10, 10), 10) for k, v in x0.items()})
    return out


def _jet_samples(frame: ExtendedFrame, seed: int, count: int) -> list[dict]:
    rng = random.Random(seed ^ 0x7E7)
    names = frame.jets + frame.inert
    return [{n: sample_rational(rng) for n in names} for _ in range(count)]


@dataclass
class GammaATower:
    split: DegenerateSplit
    frame: ExtendedFrame
    drift: VectorField
    levels: list                 # per level: list of kept generators
    ranks: list                  # rank at x0 (jets sampled) per level
    rank_jumps: list
    indices: list                # Brunovsky indices k_1 >= k_2 >= ...
    chains: dict                 # a-index -> list of ad^j f_a (unpruned)
    chain_lengths: dict          # a-index -> number of rank-raising levels
    permutation: list            # a-indices sorted by chain length
    involutive: list             # per level verdict True / None (False aborts)
    constant_rank: bool
    full_rank: bool
    notes: list = field(default_factory=list)

    def distribution(self, level: int) -> list:
        """All generators up to ``level`` (empty for negative levels)."""
        if level < 0:
            return []
        return list(self.levels[min(level, len(self.levels) - 1)])


def _point_rank(gens, x0, jets_list):
    best = 0
    for jets in jets_list:
        try:
            best = max(best, rank_at_point(gens, {**x0, **jets}))
        except EvaluationError:
            continue
    return best


def _involutivity_at(gens, brackets, pts):
    """all / none / mixed verdict over ``pts``; returns (verdict, witness)."""
    results = []
    witness = None
    for pt in pts:
        try:
            r = rank_at_point(gens, pt)
            bad = None
            for pair, br in brackets:
                if rank_at_point(gens + [br], pt) > r:
                    bad = (pair, br)
                    break
        except EvaluationError:
            continue
        results.append(bad is None)
        if bad is not None and witness is None:
            witness = bad
    if not results:
        return None, None
    if all(results):
        return True, None
    if not any(results):
        return False, witness
    return None, witness


def gamma_a_tower(sys: ControlAffineSystem, split: DegenerateSplit, point: Mapping,
                  K: int | None = None, budget: int | None = None, *, radius=Fraction(1, 10),
                  seed: int = DEFAULT_SEED, neighbours: int = 5, jet_draws: int = 5) -> GammaATower:
    """Gamma^a_{k+1} = Gamma^a_k + ad_F Gamma^a_k at x0 with sampled jets.

    Every level is checked for involutivity (abort with a witness on
    failure) and for constant rank over a box around x0.
    """
    budget = split.p + 1 if budget is None else budget
    if budget < split.p:
        raise DegenerateError(f"budget must be at least p={split.p}")
    F, frame = build_extended_drift(sys, split, K)
    x0 = _state_point(sys, point)
    jets = _jet_samples(frame, seed, jet_draws)
    near = _box_points(x0, Fraction(radius), neighbours, seed)
    a_fields = {i: sys.controls[i - 1].extend(frame.names) for i in split.a}
    chains = {i: [a_fields[i]] for i in split.a}
    chain_len = {i: 0 for i in split.a}
    kept: list = []
    levels, ranks, verdicts = [], [], []
    notes: list = []
    rank = 0
    constant = True
    n = sys.n
    frontier = {i: a_fields[i] for i in split.a}
    for level in range(budget + 1):
        if level > 0:
            frontier = {i: lie_bracket(F, v) for i, v in frontier.items()}
            for i, v in frontier.items():
                chains[i].append(v)
        for i in split.a:
            v = frontier[i]
            if any(not c.is_zero_canonical() for c in v.components[n:]):
                raise DegenerateError("a tower generator has jet components")
            if v.is_zero():
                continue
            r2 = _point_rank(kept + [v], x0, jets)
            if r2 > rank:
                kept.append(v)
                rank = r2
                chain_len[i] += 1
        levels.append(list(kept))
        ranks.append(rank)
        for q in near:
            if _point_rank(kept, q, jets) != rank:
                constant = False
        if not constant:
            raise DimensionError(f"rank of Gamma^a_{level} is not constant around the point")
        brackets = [((i, j), lie_bracket(kept[i], kept[j]))
                    for i in range(len(kept)) for j in range(i + 1, len(kept))]
        brackets = [(pq, br) for pq, br in brackets if not br.is_zero()]
        pts = [{**x0, **jets[0]}] + [{**q, **jets[(t + 1) % len(jets)]} for t, q in enumerate(near)]
        verdict, witness = _involutivity_at(kept, brackets, pts)
        if verdict is False:
            raise InvolutivityError(level, witness[1].restrict(frame.states), witness[0])
        if verdict is None:
            notes.append(f"involutivity of Gamma^a_{level} indeterminate over samples")
        verdicts.append(verdict)
        if rank == n:
            break
    jumps = [ranks[0]] + [ranks[j] - ranks[j - 1] for j in range(1, len(ranks))]
    while len(jumps) > 1 and jumps[-1] == 0:
        jumps.pop()
    full = rank == n
    if not full:
        notes.append(f"Gamma^a tower stopped at rank {rank} < {n}")
    indices = brunovsky_indices(jumps)
    if full and sum(indices) != n:
        raise DegenerateError("Brunovsky indices do not sum to n")
    if indices and indices[0] > split.p + 1:
        raise DegenerateError("first Brunovsky index exceeds p+1")
    perm = sorted(split.a, key=lambda i: (-chain_len[i], i))
    return GammaATower(split, frame, F, levels, ranks, jumps, indices, chains, chain_len,
                       perm, verdicts, constant, full, notes)


# --------------------------------------------------------------------------
# Delta^a tower (cross-check only)


def delta_a_tower(sys: ControlAffineSystem, split: DegenerateSplit, point: Mapping,
                  levels: int) -> list[int]:
    """At-point ranks of Delta_{k+1} = Delta_k + ad_{f0} Delta_k + [Gamma_0^b, Delta_k]."""
    x0 = _state_point(sys, point)
    ops = [sys.drift] + [sys.controls[i - 1] for i in split.b]
    gens = [sys.controls[i - 1] for i in split.a]
    frontier = list(gens)
    ranks = [rank_at_point(gens, x0)]
    for _ in range(levels):
        new = []
        for v in frontier:
            for op in ops:
                br = lie_bracket(op, v)
                if not br.is_zero() and br not in new:
                    new.append(br)
        gens = gens + new
        frontier = new
        ranks.append(rank_at_point(gens, x0))
    return ranks


# --------------------------------------------------------------------------
# phi_{i,0}


def _scaled(v: VectorField) -> VectorField:
    scale = Expr.const(1)
    for c in v.components:
        if not c.is_polynomial():
            scale = scale * Expr._make(dict(c.den))
    return v.scale(scale)


def annihilators(gens: Sequence[VectorField], names: Sequence[str], degree_bound: int) -> list[Expr]:
    """Polynomials p in ``names`` with L_v p = 0 for every generator."""
    mons = _monomials(list(names), degree_bound)
    mons.sort(key=lambda m: (-m.degree(), m.sort_key()))
    row_index: dict = {}
    entries: list = []
    for v in gens:
        v = _scaled(v)
        if any(c.has_functions() or not c.is_polynomial() for c in v.components):
            raise AnsatzError("non-polynomial tower generator")
        for j, m in enumerate(mons):
            for mono, c in v.lie_derivative(m).num:
                key = (id(v), mono)
                row_index.setdefault(key, len(row_index))
                entries.append((row_index[key], j, c))
    rows = [[Fraction(0)] * len(mons) for _ in row_index]
    for r, j, c in entries:
        rows[r][j] += c
    out = []
    for vec in linalg.nullspace(rows, len(mons)):
        p = ZERO
        for c, m in zip(vec, mons):
            if c:
                p = p + m * c
        if not p.is_constant():
            out.append(_normalize(p))
    out.sort(key=lambda p: (p.degree(), len(p.num), p.sort_key()))
    return out


def delta_matrix(tower: GammaATower, phis: Sequence[Expr], ks: Sequence[int]) -> list[list[Expr]]:
    """Delta[i][j] = L_{ad^{k_j - 1}_F f_{a_i}} phi_j, rows in split order."""
    rows = []
    for i in tower.split.a:
        chain = tower.chains[i]
        row = []
        for phi, k in zip(phis, ks):
            v = chain[k - 1] if k - 1 < len(chain) else _extend_chain(tower, i, k - 1)
            row.append(v.lie_derivative(phi))
        rows.append(row)
    return rows


def _extend_chain(tower, i, j):
    chain = tower.chains[i]
    while len(chain) <= j:
        chain.append(lie_bracket(tower.drift, chain[-1]))
    return chain[j]


def _rank_jets(rows, x0, jets_list) -> int:
    best = 0
    for jets in jets_list:
        try:
            best = max(best, expr_rank_at(rows, {**x0, **jets}))
        except EvaluationError:
            continue
    return best


def find_phi0(sys: ControlAffineSystem, tower: GammaATower, point: Mapping,
              degree_bound: int = 2, candidates: Sequence | None = None, *,
              seed: int = DEFAULT_SEED) -> list[Expr]:
    """One phi_{i,0} per Brunovsky index, annihilating Gamma^a_{k_i - 2}.

    User ``candidates`` are verified instead of searched.  The search tries
    state-only polynomials first and adds b-jets up to order k_i - 3 only
    when needed.  Columns are chosen so the Delta matrix stays of full rank.
    """
    if not tower.full_rank:
        raise DegenerateError("Gamma^a tower does not reach full rank")
    ks = tower.indices
    x0 = _state_point(sys, point)
    jets = _jet_samples(tower.frame, seed, 5)
    if candidates is not None:
        table = SymbolTable(tower.frame.names)
        phis = [parse_expr(c, table) if isinstance(c, str) else as_expr(c) for c in candidates]
        if len(phis) != len(ks):
            raise DegenerateError(f"need {len(ks)} components, got {len(phis)}")
        for phi, k in zip(phis, ks):
            for v in tower.distribution(k - 2):
                if not is_zero(v.lie_derivative(phi)):
                    raise DegenerateError(f"{phi} does not annihilate Gamma^a_{k - 2}")
        if _rank_jets(delta_matrix(tower, phis, ks), x0, jets) != len(ks):
            raise DegenerateError("Delta matrix is singular at the point")
        return phis
    chosen: list = []
    for idx, k in enumerate(ks):
        gens = tower.distribution(k - 2)
        found = None
        jet_orders = [None] + list(range(0, max(k - 3, -1) + 1))
        for order in jet_orders:
            names = list(sys.states)
            if order is not None:
                names += [jet_name(u, j) for u in tower.frame.b_controls for j in range(order + 1)]
            for cand in annihilators(gens, names, degree_bound):
                if cand in chosen:
                    continue
                trial = chosen + [cand]
                rows = delta_matrix(tower, trial, ks[:len(trial)])
                if _rank_jets(rows, x0, jets) == len(trial):
                    found = cand
                    break
            if found is not None:
                break
        if found is None:
            raise AnsatzError(f"no annihilator of Gamma^a_{k - 2} keeps Delta invertible "
                              f"(degree <= {degree_bound})")
        chosen.append(found)
    return chosen


# --------------------------------------------------------------------------
# flat output


@dataclass
class DegenerateFlatOutput:
    split: DegenerateSplit
    frame: ExtendedFrame
    drift: VectorField
    phi0: list
    b_controls: list
    indices: list
    delta: list                 # rows over a, columns over phi
    chains: list                # chains[i][j] = L_F^j phi_i, j = 0..k_i

    @property
    def components(self) -> list:
        return [*self.phi0, *(Expr.symbol(u) for u in self.b_controls)]


def total_derivative(F: VectorField, e: Expr) -> Expr:
    """L_F e, including the inert top-jet symbols as constants."""
    return F.lie_derivative(e)


def assemble_flat_output(tower: GammaATower, phi0: Sequence[Expr]) -> DegenerateFlatOutput:
    ks = tower.indices
    chains = []
    for phi, k in zip(phi0, ks):
        chain = [phi]
        for _ in range(k):
            chain.append(total_derivative(tower.drift, chain[-1]))
        chains.append(chain)
    delta = delta_matrix(tower, list(phi0), ks)
    return DegenerateFlatOutput(tower.split, tower.frame, tower.drift, list(phi0),
                                list(tower.frame.b_controls), list(ks), delta, chains)


# --------------------------------------------------------------------------
# verification


@dataclass
class DegenerateVerification:
    ua_free: dict                 # (i, order) -> bool, orders 1..k_i - 1
    chain_identity: bool
    delta_invertible: bool
    chain_rank: int
    recovered_ua: dict            # a-control name -> Expr (Cramer solution)
    round_trip_error: float | None = None
    max_newton_residual: float | None = None
    notes: list = field(default_factory=list)

    @property
    def verified(self) -> bool:
        ok = all(self.ua_free.values()) and self.chain_identity and self.delta_invertible
        if self.round_trip_error is not None:
            ok = ok and self.round_trip_error < 1e-4
        return ok


def _true_derivative(sys, dfo: DegenerateFlatOutput, e: Expr) -> Expr:
    """d/dt along the real system: F plus u_a f_a with u_a symbolic."""
    out = total_derivative(dfo.drift, e)
    for i in dfo.split.a:
        fa = sys.controls[i - 1].extend(dfo.frame.names)
        out = out + Expr.symbol(sys.control_names[i - 1]) * fa.lie_derivative(e)
    return out


def z_symbol(i: int, order: int) -> str:
    return jet_name(f"z{i}", order)


def _cramer(mat: list, rhs: list) -> list:
    det = linalg.det_expr(mat)
    if det.is_zero_canonical():
        raise DegenerateError("singular coefficient matrix")
    out = []
    for j in range(len(rhs)):
        mj = [[rhs[r] if c == j else mat[r][c] for c in range(len(rhs))] for r in range(len(rhs))]
        out.append(linalg.det_expr(mj) / det)
    return out


def verify_degenerate_flat_output(sys: ControlAffineSystem, dfo: DegenerateFlatOutput,
                                  point: Mapping, *, seed: int = DEFAULT_SEED) -> DegenerateVerification:
    """Symbolic checks: u_a-free derivatives below order k_i, the identity
    L_{f_a} L_F^j phi = (-1)^j L_{ad_F^j f_a} phi, Delta invertible and the
    u_a solve at order k_i."""
    a_names = [sys.control_names[i - 1] for i in dfo.split.a]
    x0 = _state_point(sys, point)
    jets = _jet_samples(dfo.frame, seed, 5)
    free: dict = {}
    for i, (chain, k) in enumerate(zip(dfo.chains, dfo.indices), 1):
        d = chain[0]
        for order in range(1, k):
            d = _true_derivative(sys, dfo, d)
            free[(i, order)] = not (d.free_symbols & set(a_names)) and d == chain[order]
    ident = True
    tower_chains = {}
    for ai in dfo.split.a:
        ch = [sys.controls[ai - 1].extend(dfo.frame.names)]
        while len(ch) < max(dfo.indices):
            ch.append(lie_bracket(dfo.drift, ch[-1]))
        tower_chains[ai] = ch
    for chain, k in zip(dfo.chains, dfo.indices):
        phi = chain[0]
        for ai in dfo.split.a:
            fa = tower_chains[ai][0]
            for j in range(k):
                lhs = fa.lie_derivative(chain[j])
                rhs = tower_chains[ai][j].lie_derivative(phi) * (-1) ** j
                if not is_zero(lhs - rhs):
                    ident = False
    delta_ok = _rank_jets(dfo.delta, x0, jets) == len(dfo.indices)
    # z_i^(k_i) = phi_{i,k_i} + sum_a u_a L_{f_a} phi_{i,k_i - 1}
    E = [[sys.controls[ai - 1].extend(dfo.frame.names).lie_derivative(chain[k - 1])
          for ai in dfo.split.a] for chain, k in zip(dfo.chains, dfo.indices)]
    rhs = [Expr.symbol(z_symbol(i, k)) - chain[k]
           for i, (chain, k) in enumerate(zip(dfo.chains, dfo.indices), 1)]
    recovered = {}
    if len(E) == len(a_names):
        try:
            recovered = dict(zip(a_names, _cramer(E, rhs)))
        except DegenerateError:
            delta_ok = False
    flat_map = [c[j] for c, k in zip(dfo.chains, dfo.indices) for j in range(k)]
    chain_rank = _rank_jets(jacobian(flat_map, sys.states), x0, jets)
    notes = []
    if chain_rank != sys.n:
        notes.append(f"flat-output chain map has rank {chain_rank} < {sys.n} in x")
    return DegenerateVerification(free, ident, delta_ok, chain_rank, recovered, notes=notes)


@dataclass
class DegenerateRoundTrip:
    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    simulated: np.ndarray
    z_error: float
    max_residual: float


def degenerate_round_trip(sys: ControlAffineSystem, dfo: DegenerateFlatOutput, z_signal,
                          ub_signal, t_span, *, x_guess, dt: float = DEFAULT_DT) -> DegenerateRoundTrip:
    """Prescribe (z, u_b) as Exprs in t, recover (x, u_a), simulate, compare z.

    Recovery runs on a half-step grid so RK4 is driven by recovered values only.
    """
    if len(z_signal) != len(dfo.phi0) or len(ub_signal) != len(dfo.b_controls):
        raise DegenerateError("signal dimensions do not match the flat output")
    t0, t1 = t_span
    steps = int(round((t1 - t0) / dt))
    fine = t0 + (dt / 2) * np.arange(2 * steps + 1)
    kmax = max(dfo.indices)
    zj = signal_jets(list(z_signal), fine, kmax)
    ub_order = dfo.frame.K + 1
    ubj = signal_jets(list(ub_signal), fine, ub_order) if ub_signal else []
    jet_names = [jet_name(u, j) for j in range(ub_order + 1) for u in dfo.b_controls]
    jet_vals = (np.stack([ubj[j][:, bi] for j in range(ub_order + 1)
                          for bi in range(len(dfo.b_controls))], axis=1)
                if ub_signal else np.zeros((len(fine), 0)))
    states = list(sys.states)
    flat_map = [c[j] for c, k in zip(dfo.chains, dfo.indices) for j in range(k)]
    args = states + jet_names
    Fm = lambdify(flat_map, args)
    Jm = lambdify([e for row in jacobian(flat_map, states) for e in row], args)
    a_names = [sys.control_names[i - 1] for i in dfo.split.a]
    E = [[sys.controls[ai - 1].extend(dfo.frame.names).lie_derivative(chain[k - 1])
          for ai in dfo.split.a] for chain, k in zip(dfo.chains, dfo.indices)]
    Ef = lambdify([e for row in E for e in row], args)
    top = lambdify([c[k] for c, k in zip(dfo.chains, dfo.indices)], args)
    n, na = sys.n, len(a_names)
    x = np.asarray(x_guess, dtype=float)
    xs = np.empty((len(fine), n))
    ua = np.empty((len(fine), na))
    res = np.empty(len(fine))
    for s in range(len(fine)):
        jv = list(jet_vals[s])
        target = np.array([zj[j][s, i] for i, k in enumerate(dfo.indices) for j in range(k)])
        fun = lambda v: np.array(Fm(*v, *jv)) - target
        jac = lambda v: np.array(Jm(*v, *jv)).reshape(n, n)
        try:
            x, res[s] = newton(fun, jac, x)
        except NumericError as exc:
            raise NumericError(f"state recovery failed at t={fine[s]:.6g}: {exc}") from exc
        xs[s] = x
        Em = np.array(Ef(*x, *jv)).reshape(len(dfo.indices), na)
        rhs = np.array([zj[k][s, i] for i, k in enumerate(dfo.indices)]) - np.array(top(*x, *jv))
        try:
            ua[s] = np.linalg.solve(Em, rhs)
        except np.linalg.LinAlgError as exc:
            raise NumericError(f"Delta singular at t={fine[s]:.6g} (chart boundary)") from exc
    u_full = np.zeros((len(fine), sys.m))
    for col, i in enumerate(dfo.split.a):
        u_full[:, i - 1] = ua[:, col]
    for col, i in enumerate(dfo.split.b):
        u_full[:, i - 1] = ubj[0][:, col]
    traj = integrate(sys, xs[0], SampledSignal(t0, dt / 2, u_full), (t0, t1), dt)
    zf = lambdify(dfo.phi0, args)
    sim = np.array([zf(*xv, *jet_vals[2 * r]) for r, xv in enumerate(traj.states)])
    ref = zj[0][::2]
    return DegenerateRoundTrip(fine, xs, u_full, traj.states,
                               float(np.max(np.abs(sim - ref))), float(res.max()))


# --------------------------------------------------------------------------
# one-call pipeline


@dataclass
class DegenerateAnalysis:
    split: DegenerateSplit
    tower: GammaATower
    flat_output: DegenerateFlatOutput
    verification: DegenerateVerification


def analyze_degenerate(sys: ControlAffineSystem, point: Mapping, *, a=None, b=None,
                       K: int | None = None, degree_bound: int = 2, candidates=None,
                       radius=Fraction(1, 10), seed: int = DEFAULT_SEED) -> DegenerateAnalysis:
    split = choose_split(sys, point, a, b)
    tower = gamma_a_tower(sys, split, point, K, radius=radius, seed=seed)
    if not tower.full_rank:
        raise DegenerateError(f"Gamma^a tower stops at rank {tower.ranks[-1]} < {sys.n}")
    phi0 = find_phi0(sys, tower, point, degree_bound, candidates, seed=seed)
    dfo = assemble_flat_output(tower, phi0)
    ver = verify_degenerate_flat_output(sys, dfo, point, seed=seed)
    return DegenerateAnalysis(split, tower, dfo, ver)
